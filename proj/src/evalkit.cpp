#include "nl2sql/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

using nlohmann::json;

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(text);
  }
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') {
      out.push_back('"');
    }
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string money(double amount) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", round_to_cents(amount));
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.flush();
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

std::string strip_terminator(std::string_view sql) {
  std::string_view text = trim(sql);
  while (!text.empty() && text.back() == ';') {
    text.remove_suffix(1);
    text = trim(text);
  }
  return std::string(text);
}

}  // namespace

std::vector<Sample> parse_questions_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("questions file is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) {
    throw FormatError("questions file must hold a JSON array");
  }
  std::vector<Sample> samples;
  samples.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& entry = doc[i];
    if (!entry.is_object()) {
      throw FormatError("entry is not an object", i);
    }
    Sample sample;
    sample.index = i;
    for (auto [key, field] : {std::pair{"question", &sample.question}, std::pair{"query", &sample.gold_query},
                              std::pair{"db_id", &sample.db_id}}) {
      auto it = entry.find(key);
      if (it == entry.end() || !it->is_string()) {
        throw FormatError(std::string("missing string field \"") + key + "\"", i);
      }
      *field = it->get<std::string>();
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::filesystem::path spider_db_file(const std::filesystem::path& db_root, const std::string& db_id) {
  return db_root / db_id / (db_id + ".sqlite");
}

Dataset Dataset::load(const std::filesystem::path& questions_file, const std::filesystem::path& tables_file,
                      const std::filesystem::path& db_root, Slice slice) {
  for (const auto& path : {questions_file, tables_file}) {
    if (!std::filesystem::is_regular_file(path)) {
      throw LoadError("file not found: " + path.string());
    }
  }
  if (!std::filesystem::is_directory(db_root)) {
    throw LoadError("database root not found: " + db_root.string());
  }
  Dataset dataset;
  dataset.db_root_ = db_root;
  for (auto& schema : load_tables_json(tables_file)) {
    std::string id = schema.db_id;
    dataset.schemas_.insert_or_assign(std::move(id), std::move(schema));
  }
  std::vector<Sample> all = parse_questions_json(read_file(questions_file));
  std::size_t begin = std::min(slice.offset, all.size());
  std::size_t end = slice.limit ? std::min(all.size(), begin + *slice.limit) : all.size();
  for (std::size_t i = begin; i < end; ++i) {
    const Sample& sample = all[i];
    if (!dataset.schemas_.contains(sample.db_id)) {
      throw LoadError("sample " + std::to_string(sample.index) + ": unknown db_id '" + sample.db_id + "'");
    }
    if (!std::filesystem::is_regular_file(spider_db_file(db_root, sample.db_id))) {
      throw LoadError("sample " + std::to_string(sample.index) + ": database file missing for '" + sample.db_id +
                      "' (" + spider_db_file(db_root, sample.db_id).string() + ")");
    }
    dataset.samples_.push_back(sample);
  }
  return dataset;
}

const DatabaseSchema& Dataset::schema(const std::string& db_id) const {
  auto it = schemas_.find(db_id);
  if (it == schemas_.end()) {
    throw LoadError("unknown db_id '" + db_id + "'");
  }
  return it->second;
}

std::filesystem::path Dataset::db_file(const std::string& db_id) const { return spider_db_file(db_root_, db_id); }

Hundredths Hundredths::ratio(std::int64_t numerator, std::int64_t denominator) {
  if (denominator <= 0 || numerator < 0) {
    throw MetricError("ratio needs a non-negative numerator and a positive denominator");
  }
  // round(100 n / d) with ties up, in integers.
  return Hundredths((200 * numerator + denominator) / (2 * denominator));
}

Hundredths Hundredths::percent(std::int64_t part, std::int64_t whole) { return ratio(100 * part, whole); }

std::string Hundredths::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%02lld", static_cast<long long>(raw_ / 100),
                static_cast<long long>(raw_ % 100));
  return buf;
}

PriceTable::PriceTable(double default_price) : default_price_(default_price) {
  if (default_price < 0.0) {
    throw ConfigError("prices must be >= 0");
  }
}

void PriceTable::set(std::string model_id, double price) {
  if (price < 0.0) {
    throw ConfigError("price for " + model_id + " must be >= 0");
  }
  prices_.insert_or_assign(std::move(model_id), price);
}

double PriceTable::price_for(std::string_view model_id) const {
  auto it = prices_.find(model_id);
  return it == prices_.end() ? default_price_ : it->second;
}

std::string row_to_jsonl(const SampleRow& row) {
  json doc = {{"index", row.index},
              {"db_id", row.db_id},
              {"final_sql", row.final_sql},
              {"ea", row.ea},
              {"valid", row.valid},
              {"attempts", row.attempts},
              {"prompt_tokens", row.prompt_tokens},
              {"completion_tokens", row.completion_tokens},
              {"cost", row.cost},
              {"status", to_string(row.status)},
              {"exact_match", row.exact_match},
              {"error", row.error}};
  return doc.dump();
}

SampleRow row_from_jsonl(std::string_view line) {
  try {
    json doc = json::parse(line);
    SampleRow row;
    row.index = doc.at("index").get<std::size_t>();
    row.db_id = doc.at("db_id").get<std::string>();
    row.final_sql = doc.at("final_sql").get<std::string>();
    row.ea = doc.at("ea").get<bool>();
    row.valid = doc.at("valid").get<bool>();
    row.attempts = doc.at("attempts").get<int>();
    row.prompt_tokens = doc.at("prompt_tokens").get<std::int64_t>();
    row.completion_tokens = doc.at("completion_tokens").get<std::int64_t>();
    row.cost = doc.at("cost").get<double>();
    auto status = parse_run_status(doc.at("status").get<std::string>());
    if (!status) {
      throw FormatError("unknown status in checkpoint row");
    }
    row.status = *status;
    row.exact_match = doc.at("exact_match").get<bool>();
    row.error = doc.at("error").get<std::string>();
    return row;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint row: ") + e.what());
  }
}

std::map<std::size_t, SampleRow> load_checkpoint(const std::filesystem::path& path) {
  std::map<std::size_t, SampleRow> rows;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return rows;
  }
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    try {
      SampleRow row = row_from_jsonl(line);
      rows.insert_or_assign(row.index, std::move(row));
    } catch (const FormatError&) {
      // A run killed mid-write leaves a torn last line.
    }
  }
  return rows;
}

bool normalized_sql_equal(std::string_view lhs, std::string_view rhs) {
  return to_lower(collapse_whitespace(strip_terminator(lhs))) == to_lower(collapse_whitespace(strip_terminator(rhs)));
}

SampleRow make_row(const Sample& sample, const PipelineResult& result, const PriceTable& prices) {
  SampleRow row;
  row.index = sample.index;
  row.db_id = sample.db_id;
  row.status = result.status();
  row.error = result.trace.error;
  row.attempts = static_cast<int>(result.trace.attempts.size());
  if (result.final_sql) {
    row.final_sql = result.final_sql->text();
    row.exact_match = normalized_sql_equal(row.final_sql, sample.gold_query);
  }
  row.ea = result.ea.value_or(false);
  row.valid = result.outcome && result.outcome->succeeded();
  if (row.status == RunStatus::kStageError) {
    row.ea = false;
    row.valid = false;
  }
  for (const auto& stage : result.trace.stages) {
    row.prompt_tokens += stage.prompt_tokens();
    row.completion_tokens += stage.completion_tokens();
    row.cost += token_cost(stage.prompt_tokens() + stage.completion_tokens(), prices.price_for(stage.model_id));
  }
  return row;
}

SampleRow stage_error_row(const Sample& sample, std::string message) {
  SampleRow row;
  row.index = sample.index;
  row.db_id = sample.db_id;
  row.status = RunStatus::kStageError;
  row.error = std::move(message);
  return row;
}

RunAggregates compute_metrics(const std::vector<SampleRow>& rows) {
  if (rows.empty()) {
    throw MetricError("no sample rows to aggregate");
  }
  RunAggregates agg;
  agg.sample_count = rows.size();
  std::int64_t attempts_total = 0;
  for (const auto& row : rows) {
    agg.ea_count += row.ea ? 1 : 0;
    agg.valid_count += row.valid ? 1 : 0;
    agg.stage_error_count += row.status == RunStatus::kStageError ? 1 : 0;
    agg.exact_match_count += row.exact_match ? 1 : 0;
    attempts_total += row.attempts;
    ++agg.attempts_histogram[row.attempts];
    agg.prompt_tokens += row.prompt_tokens;
    agg.completion_tokens += row.completion_tokens;
    agg.total_cost += row.cost;
  }
  auto n = static_cast<std::int64_t>(agg.sample_count);
  agg.total_tokens = agg.prompt_tokens + agg.completion_tokens;
  agg.execution_accuracy = Hundredths::percent(static_cast<std::int64_t>(agg.ea_count), n);
  agg.valid_sql_rate = Hundredths::percent(static_cast<std::int64_t>(agg.valid_count), n);
  agg.exact_match_rate = Hundredths::percent(static_cast<std::int64_t>(agg.exact_match_count), n);
  agg.mean_attempts = Hundredths::ratio(attempts_total, n);
  return agg;
}

RunReport evaluate(const Dataset& dataset, Gateway& gateway, const PipelineConfig& config,
                   const EvalOptions& options) {
  config.validate(true);
  if (options.parallelism == 0) {
    throw ConfigError("parallelism must be positive");
  }
  std::map<std::size_t, SampleRow> done;
  if (options.checkpoint) {
    done = load_checkpoint(*options.checkpoint);
  }
  std::vector<const Sample*> pending;
  for (const auto& sample : dataset.samples()) {
    if (!done.contains(sample.index)) {
      pending.push_back(&sample);
    }
  }

  std::mutex sink_mutex;
  std::unique_ptr<std::ofstream> checkpoint_out;
  if (options.checkpoint) {
    if (options.checkpoint->has_parent_path()) {
      std::filesystem::create_directories(options.checkpoint->parent_path());
    }
    // A killed run can leave a torn last line; start new rows on a fresh line.
    bool torn_tail = false;
    if (std::ifstream tail(*options.checkpoint, std::ios::binary | std::ios::ate); tail && tail.tellg() > 0) {
      tail.seekg(-1, std::ios::end);
      torn_tail = tail.get() != '\n';
    }
    checkpoint_out = std::make_unique<std::ofstream>(*options.checkpoint, std::ios::app | std::ios::binary);
    if (!*checkpoint_out) {
      throw IoError("cannot open checkpoint " + options.checkpoint->string());
    }
    if (torn_tail) {
      *checkpoint_out << '\n';
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) {
        return;
      }
      const Sample& sample = *pending[slot];
      SampleRow row;
      std::optional<PipelineTrace> trace;
      try {
        PipelineInput input{std::to_string(sample.index), sample.question, dataset.db_file(sample.db_id),
                            sample.gold_query};
        PipelineResult result = run_pipeline(gateway, config, dataset.schema(sample.db_id), input);
        row = make_row(sample, result, options.prices);
        trace = std::move(result.trace);
      } catch (const std::exception& e) {
        row = stage_error_row(sample, e.what());
      }
      if (trace && options.traces != nullptr) {
        try {
          options.traces->append(*trace);
        } catch (const std::exception&) {
          // Losing a trace line must not lose the sample.
        }
      }
      std::lock_guard lock(sink_mutex);
      if (checkpoint_out) {
        *checkpoint_out << row_to_jsonl(row) << '\n';
        checkpoint_out->flush();
      }
      if (options.on_row) {
        options.on_row(row);
      }
      done.insert_or_assign(row.index, std::move(row));
    }
  };
  {
    std::vector<std::jthread> workers;
    std::size_t count = std::min(options.parallelism, std::max<std::size_t>(pending.size(), 1));
    for (std::size_t i = 0; i < count; ++i) {
      workers.emplace_back(worker);
    }
  }

  RunReport report;
  for (const auto& sample : dataset.samples()) {
    report.rows.push_back(done.at(sample.index));
  }
  if (!report.rows.empty()) {
    report.aggregates = compute_metrics(report.rows);
  }
  return report;
}

std::string render_summary_text(const RunReport& report) {
  const RunAggregates& agg = report.aggregates;
  std::ostringstream out;
  out << "samples:              " << agg.sample_count << "\n";
  out << "execution accuracy:   " << agg.execution_accuracy.to_string() << "% (" << agg.ea_count << "/"
      << agg.sample_count << ")\n";
  out << "valid SQL rate:       " << agg.valid_sql_rate.to_string() << "% (" << agg.valid_count << "/"
      << agg.sample_count << ")\n";
  out << "stage errors:         " << agg.stage_error_count << "\n";
  out << "mean attempts:        " << agg.mean_attempts.to_string() << "\n";
  out << "attempts histogram:  ";
  for (const auto& [attempts, count] : agg.attempts_histogram) {
    out << " " << attempts << ":" << count;
  }
  out << "\n";
  out << "tokens:               " << agg.total_tokens << " (prompt " << agg.prompt_tokens << ", completion "
      << agg.completion_tokens << ")\n";
  out << "cost:                 $" << money(agg.total_cost) << "\n";
  out << "exact match (diagnostic only, not a correctness measure): " << agg.exact_match_rate.to_string() << "%\n";
  return out.str();
}

void write_report(const RunReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create report directory " + out_dir.string());
  }
  const RunAggregates& agg = report.aggregates;
  json histogram = json::object();
  for (const auto& [attempts, count] : agg.attempts_histogram) {
    histogram[std::to_string(attempts)] = count;
  }
  json doc;
  doc["aggregates"] = {{"sample_count", agg.sample_count},
                       {"ea_count", agg.ea_count},
                       {"valid_count", agg.valid_count},
                       {"stage_error_count", agg.stage_error_count},
                       {"execution_accuracy", agg.execution_accuracy.to_string()},
                       {"valid_sql_rate", agg.valid_sql_rate.to_string()},
                       {"mean_attempts", agg.mean_attempts.to_string()},
                       {"attempts_histogram", histogram},
                       {"prompt_tokens", agg.prompt_tokens},
                       {"completion_tokens", agg.completion_tokens},
                       {"total_tokens", agg.total_tokens},
                       {"total_cost", money(agg.total_cost)},
                       {"exact_match_rate_diagnostic", agg.exact_match_rate.to_string()}};
  doc["rows"] = json::array();
  for (const auto& row : report.rows) {
    doc["rows"].push_back(json::parse(row_to_jsonl(row)));
  }
  write_text(out_dir / "report.json", doc.dump(2) + "\n");

  std::string csv =
      "index,db_id,status,ea,valid,attempts,prompt_tokens,completion_tokens,cost,exact_match_diagnostic,final_sql,"
      "error\n";
  for (const auto& row : report.rows) {
    char cost[64];
    std::snprintf(cost, sizeof(cost), "%.6f", row.cost);
    csv += std::to_string(row.index) + "," + csv_field(row.db_id) + "," + std::string(to_string(row.status)) + "," +
           (row.ea ? "1" : "0") + "," + (row.valid ? "1" : "0") + "," + std::to_string(row.attempts) + "," +
           std::to_string(row.prompt_tokens) + "," + std::to_string(row.completion_tokens) + "," + cost + "," +
           (row.exact_match ? "1" : "0") + "," + csv_field(row.final_sql) + "," + csv_field(row.error) + "\n";
  }
  write_text(out_dir / "samples.csv", csv);
  write_text(out_dir / "summary.txt", render_summary_text(report));
}

}  // namespace nl2sql
