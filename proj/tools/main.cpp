#include <iostream>

#include "nl2sql/cli.hpp"

int main(int argc, char** argv) { return nl2sql::run_cli(argc, argv, std::cout, std::cerr); }
