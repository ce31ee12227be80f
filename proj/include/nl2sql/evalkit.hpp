#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nl2sql/pipeline.hpp"
#include "nl2sql/schema.hpp"

namespace nl2sql {

struct Sample {
  // Position in the questions file, independent of slicing.
  std::size_t index = 0;
  std::string question;
  std::string gold_query;
  std::string db_id;
};

// Throws FormatError naming the entry.
std::vector<Sample> parse_questions_json(std::string_view text);

struct Slice {
  std::size_t offset = 0;
  std::optional<std::size_t> limit;
};

class Dataset {
 public:
  // Databases live at <db_root>/<db_id>/<db_id>.sqlite. Throws LoadError when
  // a selected sample's db_id has no schema or no database file.
  static Dataset load(const std::filesystem::path& questions_file, const std::filesystem::path& tables_file,
                      const std::filesystem::path& db_root, Slice slice = {});

  const std::vector<Sample>& samples() const { return samples_; }
  const DatabaseSchema& schema(const std::string& db_id) const;
  std::filesystem::path db_file(const std::string& db_id) const;

 private:
  std::vector<Sample> samples_;
  std::map<std::string, DatabaseSchema> schemas_;
  std::filesystem::path db_root_;
};

std::filesystem::path spider_db_file(const std::filesystem::path& db_root, const std::string& db_id);

// A non-negative quantity in hundredths, rounded half-up from a ratio.
class Hundredths {
 public:
  constexpr Hundredths() = default;
  static constexpr Hundredths from_raw(std::int64_t raw) { return Hundredths(raw); }
  // numerator / denominator, half-up to 2 d.p. Throws MetricError on a zero
  // denominator or negative input.
  static Hundredths ratio(std::int64_t numerator, std::int64_t denominator);
  // 100 * part / whole.
  static Hundredths percent(std::int64_t part, std::int64_t whole);

  constexpr std::int64_t raw() const { return raw_; }
  double value() const { return static_cast<double>(raw_) / 100.0; }
  // "91.59"
  std::string to_string() const;

  auto operator<=>(const Hundredths&) const = default;

 private:
  constexpr explicit Hundredths(std::int64_t raw) : raw_(raw) {}
  std::int64_t raw_ = 0;
};

// Per-model price in dollars per million tokens.
class PriceTable {
 public:
  PriceTable() : PriceTable(kDefaultPricePerMTok) {}
  explicit PriceTable(double default_price);
  void set(std::string model_id, double price);
  double price_for(std::string_view model_id) const;

 private:
  double default_price_;
  std::map<std::string, double, std::less<>> prices_;
};

struct SampleRow {
  std::size_t index = 0;
  std::string db_id;
  std::string final_sql;
  bool ea = false;
  // The final attempt executed without failure or timeout.
  bool valid = false;
  // Executions made, first try included.
  int attempts = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double cost = 0.0;
  RunStatus status = RunStatus::kStageError;
  // Diagnostic only: normalized string equality with the gold query.
  bool exact_match = false;
  std::string error;

  bool operator==(const SampleRow&) const = default;
};

// Row <-> checkpoint line.
std::string row_to_jsonl(const SampleRow& row);
SampleRow row_from_jsonl(std::string_view line);

struct RunAggregates {
  std::size_t sample_count = 0;
  std::size_t ea_count = 0;
  std::size_t valid_count = 0;
  std::size_t stage_error_count = 0;
  std::size_t exact_match_count = 0;
  Hundredths execution_accuracy;
  Hundredths valid_sql_rate;
  Hundredths exact_match_rate;
  Hundredths mean_attempts;
  // attempts used -> sample count
  std::map<int, std::size_t> attempts_histogram;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
  double total_cost = 0.0;

  bool operator==(const RunAggregates&) const = default;
};

// Throws MetricError on empty input.
RunAggregates compute_metrics(const std::vector<SampleRow>& rows);

struct RunReport {
  std::vector<SampleRow> rows;
  RunAggregates aggregates;
};

// Builds the row for one finished pipeline run.
SampleRow make_row(const Sample& sample, const PipelineResult& result, const PriceTable& prices);
// The row recorded when a sample blew up outside the pipeline's own handling.
SampleRow stage_error_row(const Sample& sample, std::string message);

bool normalized_sql_equal(std::string_view lhs, std::string_view rhs);

struct EvalOptions {
  std::size_t parallelism = 4;
  std::optional<std::filesystem::path> checkpoint;
  TraceWriter* traces = nullptr;
  PriceTable prices;
  // Called after each finished sample, from worker threads.
  std::function<void(const SampleRow&)> on_row;
};

// Runs every sample not already in the checkpoint and returns rows sorted by
// index. Per-sample failures become stage_error rows.
RunReport evaluate(const Dataset& dataset, Gateway& gateway, const PipelineConfig& config,
                   const EvalOptions& options);

// Rows from a checkpoint file, last write per index winning. Malformed lines
// are skipped. A missing file yields no rows.
std::map<std::size_t, SampleRow> load_checkpoint(const std::filesystem::path& path);

// report.json, samples.csv and summary.txt. Throws IoError.
void write_report(const RunReport& report, const std::filesystem::path& out_dir);
std::string render_summary_text(const RunReport& report);

}  // namespace nl2sql
