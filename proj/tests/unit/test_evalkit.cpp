#include <gtest/gtest.h>

#include <json.hpp>
#include <random>

#include "nl2sql/errors.hpp"
#include "nl2sql/evalkit.hpp"
#include "nl2sql/strings.hpp"
#include "test_support.hpp"

namespace nl2sql {
namespace {

// Independent route: r is the half-up rounding of 100n/d exactly when
// 2dr - d <= 200n < 2dr + d.
bool is_half_up_hundredths(std::int64_t r, std::int64_t n, std::int64_t d) {
  return 2 * d * r - d <= 200 * n && 200 * n < 2 * d * r + d;
}

TEST(Hundredths, Examples) {
  EXPECT_EQ(Hundredths::ratio(947, 1034).to_string(), "0.92");
  EXPECT_EQ(Hundredths::percent(947, 1034).to_string(), "91.59");
  EXPECT_EQ(Hundredths::percent(67, 100).to_string(), "67.00");
  EXPECT_EQ(Hundredths::percent(0, 1034).to_string(), "0.00");
  EXPECT_EQ(Hundredths::percent(1034, 1034).to_string(), "100.00");
  EXPECT_EQ(Hundredths::percent(1, 8).to_string(), "12.50");
  EXPECT_EQ(Hundredths::percent(1, 3).to_string(), "33.33");
  EXPECT_EQ(Hundredths::percent(2, 3).to_string(), "66.67");
  EXPECT_EQ(Hundredths::from_raw(5).to_string(), "0.05");
  EXPECT_EQ(Hundredths::from_raw(12345).to_string(), "123.45");
}

TEST(Hundredths, AgreesWithTheIntervalOracle) {
  for (std::int64_t d = 1; d <= 300; ++d) {
    for (std::int64_t n = 0; n <= d; ++n) {
      Hundredths h = Hundredths::percent(n, d);
      ASSERT_TRUE(is_half_up_hundredths(h.raw(), 100 * n, d)) << n << "/" << d;
      ASSERT_TRUE(is_half_up_hundredths(Hundredths::ratio(n, d).raw(), n, d)) << n << "/" << d;
    }
  }
  EXPECT_TRUE(is_half_up_hundredths(9159, 94700, 1034));
}

TEST(Hundredths, RejectsBadInput) {
  EXPECT_THROW(Hundredths::ratio(1, 0), MetricError);
  EXPECT_THROW(Hundredths::ratio(-1, 3), MetricError);
  EXPECT_THROW(Hundredths::percent(1, -3), MetricError);
}

SampleRow row_with(std::size_t index, bool ea, int attempts, RunStatus status = RunStatus::kSolved) {
  SampleRow row;
  row.index = index;
  row.db_id = "festival";
  row.ea = ea;
  row.valid = status != RunStatus::kStageError;
  row.attempts = attempts;
  row.status = status;
  row.prompt_tokens = 100;
  row.completion_tokens = 10;
  row.cost = 110 * 15.0 / 1e6;
  return row;
}

TEST(Metrics, HeadlineRatio) {
  std::vector<SampleRow> rows;
  for (std::size_t i = 0; i < 1034; ++i) {
    rows.push_back(row_with(i, i < 947, 1));
  }
  RunAggregates agg = compute_metrics(rows);
  EXPECT_EQ(agg.execution_accuracy.to_string(), "91.59");
  EXPECT_EQ(agg.valid_sql_rate.to_string(), "100.00");
  EXPECT_EQ(agg.total_tokens, 1034 * 110);
}

TEST(Metrics, CountsAndHistogram) {
  std::vector<SampleRow> rows = {row_with(0, true, 1), row_with(1, true, 2), row_with(2, false, 4, RunStatus::kExhausted),
                                 row_with(3, false, 0, RunStatus::kStageError)};
  rows[0].exact_match = true;
  RunAggregates agg = compute_metrics(rows);
  EXPECT_EQ(agg.sample_count, 4u);
  EXPECT_EQ(agg.ea_count, 2u);
  EXPECT_EQ(agg.valid_count, 3u);
  EXPECT_EQ(agg.stage_error_count, 1u);
  EXPECT_EQ(agg.execution_accuracy.to_string(), "50.00");
  EXPECT_EQ(agg.valid_sql_rate.to_string(), "75.00");
  EXPECT_EQ(agg.exact_match_rate.to_string(), "25.00");
  EXPECT_EQ(agg.mean_attempts.to_string(), "1.75");
  EXPECT_EQ(agg.attempts_histogram, (std::map<int, std::size_t>{{0, 1}, {1, 1}, {2, 1}, {4, 1}}));
  EXPECT_THROW(compute_metrics({}), MetricError);
}

TEST(Metrics, AllStageErrorsScoreZero) {
  std::vector<SampleRow> rows;
  for (std::size_t i = 0; i < 5; ++i) {
    rows.push_back(stage_error_row(Sample{i, "q", "SELECT 1", "festival"}, "boom"));
  }
  RunAggregates agg = compute_metrics(rows);
  EXPECT_EQ(agg.execution_accuracy.to_string(), "0.00");
  EXPECT_EQ(agg.valid_sql_rate.to_string(), "0.00");
  EXPECT_EQ(agg.stage_error_count, 5u);
}

TEST(CheckpointRows, RoundTripProperty) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    SampleRow row;
    row.index = rng() % 5000;
    row.db_id = "db" + std::to_string(rng() % 7);
    row.final_sql = "SELECT \"a,b\"\nFROM t WHERE x = '" + std::to_string(rng()) + "'";
    row.ea = rng() % 2;
    row.valid = rng() % 2;
    row.attempts = static_cast<int>(rng() % 5);
    row.prompt_tokens = static_cast<std::int64_t>(rng() % 100000);
    row.completion_tokens = static_cast<std::int64_t>(rng() % 10000);
    row.cost = static_cast<double>(row.prompt_tokens + row.completion_tokens) * 15.0 / 1e6;
    row.status = static_cast<RunStatus>(rng() % 3);
    row.exact_match = rng() % 2;
    row.error = trial % 3 == 0 ? "stage \"x\" failed" : "";
    std::string line = row_to_jsonl(row);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(row_from_jsonl(line), row);
  }
  EXPECT_THROW(row_from_jsonl("{\"index\": 1}"), FormatError);
}

TEST(CheckpointRows, LastWriteWinsAndTornLinesAreSkipped) {
  testing::TempDir dir;
  std::string text = row_to_jsonl(row_with(0, false, 1)) + "\n" + row_to_jsonl(row_with(1, true, 1)) + "\n\n" +
                     row_to_jsonl(row_with(0, true, 2)) + "\n" + row_to_jsonl(row_with(2, true, 1)).substr(0, 20);
  testing::write_text(dir / "ckpt.jsonl", text);
  auto rows = load_checkpoint(dir / "ckpt.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows.at(0).ea);
  EXPECT_EQ(rows.at(0).attempts, 2);
  EXPECT_TRUE(load_checkpoint(dir / "missing.jsonl").empty());
}

TEST(ExactMatch, Normalization) {
  EXPECT_TRUE(normalized_sql_equal("SELECT  count(*)\nFROM singer;", "select count(*) from singer"));
  EXPECT_FALSE(normalized_sql_equal("SELECT count(*) FROM singer", "SELECT count(1) FROM singer"));
}

TEST(Prices, PerModelOverride) {
  PriceTable prices;
  prices.set("cheap", 1.0);
  EXPECT_DOUBLE_EQ(prices.price_for("cheap"), 1.0);
  EXPECT_DOUBLE_EQ(prices.price_for("other"), kDefaultPricePerMTok);
  EXPECT_THROW(prices.set("bad", -1.0), ConfigError);
  EXPECT_THROW(PriceTable(-2.0), ConfigError);
}

TEST(Questions, ParseAndReportBadEntries) {
  auto samples = parse_questions_json(R"([{"question": "q0", "query": "SELECT 1", "db_id": "d", "extra": 1}])");
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].gold_query, "SELECT 1");
  EXPECT_THROW(parse_questions_json("{}"), FormatError);
  EXPECT_THROW(parse_questions_json("[1"), FormatError);
  try {
    parse_questions_json(R"([{"question": "q", "query": "x", "db_id": "d"}, {"question": "q", "db_id": "d"}])");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("query"), std::string::npos);
  }
}

// Festival database, fixture tables and the 10-sample dev split.
class EvalTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new testing::TempDir();
    testing::build_festival_db(*root_ / "db");
  }
  static void TearDownTestSuite() { delete root_; }

  static std::filesystem::path db_root() { return *root_ / "db"; }
  static Dataset dev(Slice slice = {}) {
    return Dataset::load(testing::fixture_path("dev.json"), testing::fixture_path("tables.json"), db_root(), slice);
  }

  void SetUp() override { config_.route = ModelRoute::uniform(RouteTarget{"scripted", "m"}); }

  // A fresh gateway over the dev script, plus the backend for call counting.
  std::pair<std::unique_ptr<Gateway>, std::shared_ptr<ScriptedBackend>> scripted_gateway() const {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->load_json_file(testing::fixture_path("dev_script.json"));
    auto gateway = std::make_unique<Gateway>();
    gateway->add_backend("scripted", backend);
    return {std::move(gateway), backend};
  }

  RunReport run_dev(EvalOptions options = {}, Slice slice = {}) {
    auto [gateway, backend] = scripted_gateway();
    return evaluate(dev(slice), *gateway, config_, options);
  }

  static std::map<std::string, std::string> report_files(const RunReport& report) {
    testing::TempDir out;
    write_report(report, out.path());
    std::map<std::string, std::string> files;
    for (const char* name : {"report.json", "samples.csv", "summary.txt"}) {
      files[name] = read_file(out / name);
    }
    return files;
  }

  static testing::TempDir* root_;
  PipelineConfig config_;
};

testing::TempDir* EvalTest::root_ = nullptr;

TEST_F(EvalTest, DatasetSlicing) {
  EXPECT_EQ(dev().samples().size(), 10u);
  Dataset middle = dev(Slice{3, 4});
  ASSERT_EQ(middle.samples().size(), 4u);
  EXPECT_EQ(middle.samples().front().index, 3u);
  EXPECT_EQ(middle.samples().back().index, 6u);
  EXPECT_EQ(dev(Slice{8, 100}).samples().size(), 2u);
  EXPECT_TRUE(dev(Slice{20, std::nullopt}).samples().empty());
  EXPECT_EQ(middle.db_file("festival"), db_root() / "festival" / "festival.sqlite");
  EXPECT_EQ(middle.schema("festival").tables.size(), 8u);
}

TEST_F(EvalTest, DatasetLoadFailures) {
  testing::TempDir dir;
  testing::write_text(dir / "q.json", R"([{"question": "q", "query": "SELECT 1", "db_id": "concert_singer"}])");
  EXPECT_THROW(Dataset::load(dir / "q.json", testing::fixture_path("tables.json"), db_root()), LoadError);
  testing::write_text(dir / "q2.json", R"([{"question": "q", "query": "SELECT 1", "db_id": "nowhere"}])");
  EXPECT_THROW(Dataset::load(dir / "q2.json", testing::fixture_path("tables.json"), db_root()), LoadError);
  EXPECT_THROW(Dataset::load(dir / "none.json", testing::fixture_path("tables.json"), db_root()), LoadError);
  EXPECT_THROW(Dataset::load(testing::fixture_path("dev.json"), testing::fixture_path("tables.json"), dir / "x"),
               LoadError);
  // Samples outside the slice are not checked.
  EXPECT_NO_THROW(Dataset::load(dir / "q.json", testing::fixture_path("tables.json"), db_root(), Slice{1, 5}));
}

TEST_F(EvalTest, DevSplitAggregates) {
  RunReport report = run_dev();
  const RunAggregates& agg = report.aggregates;
  EXPECT_EQ(agg.sample_count, 10u);
  EXPECT_EQ(agg.ea_count, 8u);
  EXPECT_EQ(agg.valid_count, 9u);
  EXPECT_EQ(agg.stage_error_count, 1u);
  EXPECT_EQ(agg.execution_accuracy.to_string(), "80.00");
  EXPECT_EQ(agg.valid_sql_rate.to_string(), "90.00");
  EXPECT_EQ(agg.attempts_histogram, (std::map<int, std::size_t>{{0, 1}, {1, 4}, {2, 4}, {4, 1}}));
  EXPECT_EQ(agg.mean_attempts.to_string(), "1.60");

  std::vector<RunStatus> statuses;
  for (const auto& row : report.rows) {
    statuses.push_back(row.status);
  }
  using S = RunStatus;
  EXPECT_EQ(statuses, (std::vector<S>{S::kSolved, S::kSolved, S::kSolved, S::kSolved, S::kSolved, S::kSolved,
                                      S::kExhausted, S::kSolved, S::kSolved, S::kStageError}));
  EXPECT_FALSE(report.rows[6].ea);
  EXPECT_TRUE(report.rows[6].valid);
  EXPECT_NE(report.rows[9].error.find("schema_linking"), std::string::npos);
}

TEST_F(EvalTest, TokensAndCostMatchTheScript) {
  // Oracle: every scripted reply is consumed exactly once.
  nlohmann::json script = nlohmann::json::parse(testing::read_fixture("dev_script.json"));
  std::int64_t prompt = 0;
  std::int64_t completion = 0;
  for (const auto& [sample, roles] : script["samples"].items()) {
    for (const auto& [role, replies] : roles.items()) {
      for (const auto& reply : replies) {
        prompt += reply.value("prompt_tokens", std::int64_t{0});
        completion += reply.value("completion_tokens", std::int64_t{0});
      }
    }
  }
  auto [gateway, backend] = scripted_gateway();
  RunReport report = evaluate(dev(), *gateway, config_, EvalOptions{});
  EXPECT_EQ(backend->calls(), 52u);
  EXPECT_EQ(report.aggregates.prompt_tokens, prompt);
  EXPECT_EQ(report.aggregates.completion_tokens, completion);
  EXPECT_EQ(report.aggregates.total_tokens, 9795);
  // 9795 tokens at $15 per million is $0.146925.
  EXPECT_NEAR(report.aggregates.total_cost, 0.146925, 1e-12);
  EXPECT_NE(report_files(report)["summary.txt"].find("cost:                 $0.15"), std::string::npos);
}

TEST_F(EvalTest, ParallelismDoesNotChangeTheReport) {
  EvalOptions serial;
  serial.parallelism = 1;
  EvalOptions wide;
  wide.parallelism = 8;
  EXPECT_EQ(report_files(run_dev(serial)), report_files(run_dev(wide)));
}

TEST_F(EvalTest, ResumeAfterInterruptionIsByteIdentical) {
  testing::TempDir dir;
  EvalOptions full;
  full.checkpoint = dir / "full.jsonl";
  auto reference = report_files(run_dev(full));

  // Keep four finished rows and a torn fifth, as a killed run would.
  std::vector<std::string> lines;
  {
    std::istringstream in(read_file(*full.checkpoint));
    for (std::string line; std::getline(in, line);) {
      lines.push_back(line);
    }
  }
  ASSERT_EQ(lines.size(), 10u);
  std::string partial;
  for (std::size_t i = 0; i < 4; ++i) {
    partial += lines[i] + "\n";
  }
  partial += lines[4].substr(0, lines[4].size() / 2);
  EvalOptions resumed;
  resumed.checkpoint = dir / "resumed.jsonl";
  testing::write_text(*resumed.checkpoint, partial);
  std::size_t finished = load_checkpoint(*resumed.checkpoint).size();
  ASSERT_EQ(finished, 4u);

  auto [gateway, backend] = scripted_gateway();
  std::size_t reruns = 0;
  resumed.on_row = [&](const SampleRow&) { ++reruns; };
  RunReport report = evaluate(dev(), *gateway, config_, resumed);
  EXPECT_EQ(reruns, 6u);
  EXPECT_EQ(report_files(report), reference);
  EXPECT_EQ(load_checkpoint(*resumed.checkpoint).size(), 10u);
}

TEST_F(EvalTest, CompletedCheckpointMakesNoCalls) {
  testing::TempDir dir;
  EvalOptions options;
  options.checkpoint = dir / "ckpt.jsonl";
  auto reference = report_files(run_dev(options));
  auto empty = std::make_shared<ScriptedBackend>();
  Gateway gateway;
  gateway.add_backend("scripted", empty);
  RunReport again = evaluate(dev(), gateway, config_, options);
  EXPECT_EQ(empty->calls(), 0u);
  EXPECT_EQ(report_files(again), reference);
}

TEST_F(EvalTest, ReplayOnlyRunReproducesTheReport) {
  testing::TempDir dir;
  auto cache = std::make_shared<ReplayCache>(dir / "cache");
  auto [gateway, backend] = scripted_gateway();
  gateway->set_cache(cache, CacheMode::kReadWrite);
  auto reference = report_files(evaluate(dev(), *gateway, config_, EvalOptions{}));
  EXPECT_GT(cache->stats().entries, 40u);

  for (int run = 0; run < 2; ++run) {
    auto empty = std::make_shared<ScriptedBackend>();
    Gateway replay;
    replay.add_backend("scripted", empty);
    replay.set_cache(cache, CacheMode::kReplayOnly);
    EvalOptions options;
    options.parallelism = run == 0 ? 1 : 6;
    EXPECT_EQ(report_files(evaluate(dev(), replay, config_, options)), reference);
    EXPECT_EQ(empty->calls(), 0u);
  }
}

TEST_F(EvalTest, EveryStageFailingScoresZero) {
  Gateway gateway;
  gateway.add_backend("scripted", std::make_shared<ScriptedBackend>());
  RunReport report = evaluate(dev(), gateway, config_, EvalOptions{});
  EXPECT_EQ(report.aggregates.stage_error_count, 10u);
  EXPECT_EQ(report.aggregates.execution_accuracy.to_string(), "0.00");
  EXPECT_EQ(report.aggregates.valid_sql_rate.to_string(), "0.00");
}

TEST_F(EvalTest, TracesAreWrittenPerSample) {
  testing::TempDir dir;
  TraceWriter traces(dir / "traces.jsonl");
  EvalOptions options;
  options.traces = &traces;
  run_dev(options);
  for (int i = 0; i < 10; ++i) {
    EXPECT_TRUE(find_trace_line(traces.path(), std::to_string(i))) << i;
  }
  std::string sample6 = format_trace_line(*find_trace_line(traces.path(), "6"));
  EXPECT_NE(sample6.find("status exhausted"), std::string::npos);
  EXPECT_NE(sample6.find("repeats an earlier attempt"), std::string::npos);
  EXPECT_NE(sample6.find("unknown error code FAKE-99"), std::string::npos);
}

TEST_F(EvalTest, NinetyFivePercentOnAHundredSamples) {
  testing::TempDir dir;
  nlohmann::json questions = nlohmann::json::array();
  auto backend = std::make_shared<ScriptedBackend>();
  int right = 0;
  for (int i = 0; i < 100; ++i) {
    std::string gold = "SELECT count(*) FROM singer_in_concert WHERE concert_ID > " + std::to_string(i % 7);
    questions.push_back({{"question", "Question " + std::to_string(i)}, {"query", gold}, {"db_id", "festival"}});
    const std::string id = std::to_string(i);
    backend->add_ordered(id, AgentRole::kSchemaLinking, {R"({"tables": {"singer_in_concert": ["concert_ID"]}})", 50, 5});
    backend->add_ordered(id, AgentRole::kSubproblem, {R"({"SELECT": "count"})", 50, 5});
    backend->add_ordered(id, AgentRole::kQueryPlan, {R"({"steps": ["Count rows"]})", 50, 5});
    bool correct = i % 20 != 7;
    right += correct ? 1 : 0;
    backend->add_ordered(id, AgentRole::kSql, {correct ? gold : "SELECT -1", 50, 5});
  }
  testing::write_text(dir / "q.json", questions.dump());
  Dataset dataset = Dataset::load(dir / "q.json", testing::fixture_path("tables.json"), db_root());
  Gateway gateway;
  gateway.add_backend("scripted", backend);
  config_.max_correction_attempts = 0;
  RunReport report = evaluate(dataset, gateway, config_, EvalOptions{});
  ASSERT_EQ(right, 95);
  EXPECT_EQ(report.aggregates.ea_count, 95u);
  EXPECT_EQ(report.aggregates.execution_accuracy.to_string(), "95.00");
  EXPECT_EQ(report.aggregates.total_tokens, 100 * 4 * 55);
}

TEST_F(EvalTest, ReportFiles) {
  testing::TempDir dir;
  RunReport report = run_dev();
  write_report(report, dir / "out" / "nested");
  std::string csv = read_file(dir / "out" / "nested" / "samples.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "index,db_id,status,ea,valid,attempts,prompt_tokens,completion_tokens,cost,exact_match_diagnostic,"
            "final_sql,error");
  nlohmann::json doc = nlohmann::json::parse(read_file(dir / "out" / "nested" / "report.json"));
  EXPECT_EQ(doc["aggregates"]["execution_accuracy"], "80.00");
  EXPECT_EQ(doc["rows"].size(), 10u);
  std::string summary = render_summary_text(report);
  EXPECT_NE(summary.find("execution accuracy:   80.00% (8/10)"), std::string::npos);
  EXPECT_NE(summary.find("valid SQL rate:       90.00% (9/10)"), std::string::npos);

  RunReport quoted;
  quoted.rows.push_back(row_with(0, true, 1));
  quoted.rows[0].final_sql = "SELECT a, \"b\" FROM t";
  quoted.rows[0].error = "line1\nline2";
  quoted.aggregates = compute_metrics(quoted.rows);
  write_report(quoted, dir / "quoted");
  EXPECT_NE(read_file(dir / "quoted" / "samples.csv").find(",\"SELECT a, \"\"b\"\" FROM t\",\"line1\nline2\"\n"),
            std::string::npos);

  testing::write_text(dir / "file", "x");
  EXPECT_THROW(write_report(report, dir / "file" / "out"), IoError);
}

TEST_F(EvalTest, ConfigIsValidated) {
  auto [gateway, backend] = scripted_gateway();
  EvalOptions options;
  options.parallelism = 0;
  EXPECT_THROW(evaluate(dev(), *gateway, config_, options), ConfigError);
  PipelineConfig unrouted;
  EXPECT_THROW(evaluate(dev(), *gateway, unrouted, EvalOptions{}), ConfigError);
}

}  // namespace
}  // namespace nl2sql
