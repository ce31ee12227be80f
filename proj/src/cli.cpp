#include "nl2sql/cli.hpp"

#include <CLI11.hpp>
#include <ostream>

#include "nl2sql/config.hpp"
#include "nl2sql/errors.hpp"
#include "nl2sql/evalkit.hpp"
#include "nl2sql/pipeline.hpp"
#include "nl2sql/taxonomy.hpp"

namespace nl2sql {
namespace {

constexpr std::size_t kAskPreviewRows = 10;

// Flags shared by ask and eval. Unset optionals leave the file's value alone.
struct RunFlags {
  std::string config;
  std::string backend;
  std::string model;
  std::string script;
  std::string templates;
  std::string cache_dir;
  std::string cache_mode;
  std::string trigger;
  std::optional<int> max_attempts;
  std::optional<double> timeout_s;
  std::optional<std::size_t> max_in_flight;
  bool no_correction = false;
  bool no_query_plan = false;
  bool sql_sees_schema = false;
  std::string trace_out;
};

void add_run_flags(CLI::App& cmd, RunFlags& flags) {
  cmd.add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
  cmd.add_option("--backend", flags.backend, "Backend id for every role without a configured route");
  cmd.add_option("--model", flags.model, "Model id for every role without a configured route");
  cmd.add_option("--script", flags.script, "Scripted replies (JSON) served by a strict scripted backend")
      ->check(CLI::ExistingFile);
  cmd.add_option("--templates", flags.templates, "Directory of <role>.txt prompt templates")
      ->check(CLI::ExistingDirectory);
  cmd.add_option("--cache-dir", flags.cache_dir, "Replay cache directory");
  cmd.add_option("--cache-mode", flags.cache_mode, "off | read-write | replay-only");
  cmd.add_option("--trigger", flags.trigger, "gold_mismatch | execution_error_only");
  cmd.add_option("--max-attempts", flags.max_attempts, "Correction rounds after the first SQL")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--timeout-s", flags.timeout_s, "Per-query execution timeout in seconds")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--max-in-flight", flags.max_in_flight, "Concurrent model calls")->check(CLI::PositiveNumber);
  cmd.add_flag("--no-correction", flags.no_correction, "Skip the correction loop");
  cmd.add_flag("--no-query-plan", flags.no_query_plan, "Skip the query plan stage");
  cmd.add_flag("--sql-sees-schema", flags.sql_sees_schema, "Show the linked schema to the SQL agent");
  cmd.add_option("--trace-out", flags.trace_out, "Append per-sample traces to this JSONL file");
}

// Loads the config file and applies flag overrides on top.
AppConfig assemble_config(const RunFlags& flags) {
  AppConfig config = flags.config.empty() ? AppConfig{} : load_config(flags.config);
  if (!flags.script.empty()) {
    BackendSpec spec;
    spec.id = flags.backend.empty() ? "scripted" : flags.backend;
    spec.kind = BackendSpec::Kind::kScripted;
    spec.script = flags.script;
    std::erase_if(config.backends, [&](const BackendSpec& b) { return b.id == spec.id; });
    config.backends.push_back(spec);
    config.routes.clear();
    config.default_route = RouteTarget{spec.id, flags.model.empty() ? "scripted" : flags.model};
  } else if (!flags.backend.empty() || !flags.model.empty()) {
    RouteTarget target = config.default_route.value_or(RouteTarget{"remote", ""});
    if (!flags.backend.empty()) {
      target.backend_id = flags.backend;
    }
    if (!flags.model.empty()) {
      target.model_id = flags.model;
    }
    if (target.model_id.empty()) {
      throw ConfigError("--backend needs a model id from --model or the config's default route");
    }
    config.default_route = target;
    config.routes.clear();
    if (config.find_backend(target.backend_id) == nullptr) {
      BackendSpec spec;
      spec.id = target.backend_id;
      config.backends.push_back(spec);
    }
  }
  if (!flags.templates.empty()) {
    config.templates_dir = flags.templates;
  }
  if (!flags.cache_dir.empty()) {
    config.cache_dir = flags.cache_dir;
    if (flags.cache_mode.empty() && config.cache_mode == CacheMode::kOff) {
      config.cache_mode = CacheMode::kReadWrite;
    }
  }
  if (!flags.cache_mode.empty()) {
    auto mode = parse_cache_mode(flags.cache_mode);
    if (!mode) {
      throw ConfigError("--cache-mode must be off, read-write or replay-only");
    }
    config.cache_mode = *mode;
  }
  if (!flags.trigger.empty()) {
    auto trigger = parse_trigger(flags.trigger);
    if (!trigger) {
      throw ConfigError("--trigger must be gold_mismatch or execution_error_only");
    }
    config.pipeline.trigger = *trigger;
    config.trigger_explicit = true;
  }
  if (flags.max_attempts) {
    config.pipeline.max_correction_attempts = *flags.max_attempts;
  }
  if (flags.timeout_s) {
    config.pipeline.timeout = std::chrono::milliseconds(static_cast<long long>(*flags.timeout_s * 1000.0));
  }
  if (flags.max_in_flight) {
    config.max_in_flight = *flags.max_in_flight;
  }
  config.pipeline.skip_correction = config.pipeline.skip_correction || flags.no_correction;
  config.pipeline.skip_query_plan = config.pipeline.skip_query_plan || flags.no_query_plan;
  config.pipeline.agent.sql_agent_sees_schema = config.pipeline.agent.sql_agent_sees_schema || flags.sql_sees_schema;
  if (config.templates_dir) {
    config.pipeline.templates = std::make_shared<const TemplateSet>(TemplateSet::load_directory(*config.templates_dir));
  }
  config.resolve_route();
  return config;
}

struct AskFlags {
  std::string db;
  std::string question;
  std::string db_root;
  std::string tables;
  std::string gold;
};

int run_ask(const RunFlags& flags, const AskFlags& ask, std::ostream& out) {
  AppConfig config = assemble_config(flags);
  if (!config.trigger_explicit) {
    config.pipeline.trigger = ask.gold.empty() ? CorrectionTrigger::kExecutionErrorOnly
                                               : CorrectionTrigger::kGoldMismatch;
  }

  // --db is a database file, or a db_id under the database root.
  std::filesystem::path db_file;
  std::string db_id = ask.db;
  std::optional<std::filesystem::path> db_root =
      ask.db_root.empty() ? config.db_root : std::optional<std::filesystem::path>(ask.db_root);
  if (std::filesystem::is_regular_file(ask.db)) {
    db_file = ask.db;
    db_id = db_file.stem().string();
  } else {
    if (!db_root) {
      throw LoadError("'" + ask.db + "' is not a database file; pass --db-root to resolve it as a db_id");
    }
    db_file = spider_db_file(*db_root, db_id);
    if (!std::filesystem::is_regular_file(db_file)) {
      throw LoadError("database file not found for '" + db_id + "': " + db_file.string());
    }
  }
  std::optional<std::filesystem::path> tables =
      ask.tables.empty() ? config.tables : std::optional<std::filesystem::path>(ask.tables);
  DatabaseSchema schema;
  if (tables) {
    bool found = false;
    for (auto& candidate : load_tables_json(*tables)) {
      if (candidate.db_id == db_id) {
        schema = std::move(candidate);
        found = true;
        break;
      }
    }
    if (!found) {
      throw LoadError("db_id '" + db_id + "' not found in " + tables->string());
    }
  } else {
    schema = introspect_database(db_file);
  }

  auto gateway = build_gateway(config);
  PipelineInput input{"ask", ask.question, db_file, std::nullopt};
  if (!ask.gold.empty()) {
    input.gold_query = ask.gold;
  }
  PipelineResult result = run_pipeline(*gateway, config.pipeline, schema, input);
  if (!flags.trace_out.empty()) {
    TraceWriter(flags.trace_out).append(result.trace);
  }

  out << "sql: " << (result.final_sql ? result.final_sql->text() : std::string("<none>")) << "\n";
  out << "status: " << to_string(result.status()) << "\n";
  out << "attempts: " << result.trace.attempts.size() << "\n";
  if (result.ea) {
    out << "ea: " << (*result.ea ? "true" : "false") << "\n";
  }
  if (result.outcome) {
    out << "result: " << result.outcome->describe() << "\n";
    if (const ResultSet* rs = result.outcome->result()) {
      for (std::size_t i = 0; i < std::min(rs->rows.size(), kAskPreviewRows); ++i) {
        out << "  (";
        for (std::size_t c = 0; c < rs->rows[i].size(); ++c) {
          out << (c > 0 ? ", " : "") << rs->rows[i][c].to_string();
        }
        out << ")\n";
      }
    }
  }
  if (!result.trace.error.empty()) {
    out << "error: " << result.trace.error << "\n";
  }
  return result.status() == RunStatus::kStageError ? kExitStageErrors : kExitOk;
}

struct EvalFlags {
  std::string questions;
  std::string tables;
  std::string db_root;
  std::size_t offset = 0;
  std::optional<std::size_t> limit;
  std::string out_dir;
  std::string checkpoint;
  std::optional<std::size_t> parallelism;
};

int run_eval(const RunFlags& flags, const EvalFlags& eval, std::ostream& out, std::ostream& err) {
  AppConfig config = assemble_config(flags);
  if (!config.trigger_explicit) {
    config.pipeline.trigger = CorrectionTrigger::kGoldMismatch;
  }
  auto pick = [](const std::string& flag, const std::optional<std::filesystem::path>& file, const char* name) {
    if (!flag.empty()) {
      return std::filesystem::path(flag);
    }
    if (file) {
      return *file;
    }
    throw ConfigError(std::string("eval needs --") + name + " or data." + name + " in the config");
  };
  Dataset dataset = Dataset::load(pick(eval.questions, config.questions, "questions"),
                                  pick(eval.tables, config.tables, "tables"),
                                  pick(eval.db_root, config.db_root, "db_root"), Slice{eval.offset, eval.limit});
  if (dataset.samples().empty()) {
    throw LoadError("the selected slice holds no samples");
  }

  auto gateway = build_gateway(config);
  std::optional<TraceWriter> traces;
  if (!flags.trace_out.empty()) {
    traces.emplace(flags.trace_out);
  }
  EvalOptions options;
  options.parallelism = eval.parallelism.value_or(config.parallelism);
  if (!eval.checkpoint.empty()) {
    options.checkpoint = eval.checkpoint;
  }
  options.traces = traces ? &*traces : nullptr;
  options.prices = config.prices;
  std::mutex progress_mutex;
  std::size_t finished = 0;
  const std::size_t total = dataset.samples().size();
  options.on_row = [&](const SampleRow& row) {
    std::lock_guard lock(progress_mutex);
    ++finished;
    err << "[" << finished << "/" << total << "] sample " << row.index << " " << to_string(row.status)
        << (row.ea ? " ea" : "") << "\n";
  };

  RunReport report = evaluate(dataset, *gateway, config.pipeline, options);
  write_report(report, eval.out_dir);
  out << render_summary_text(report);
  out << "report written to " << eval.out_dir << "\n";
  return report.aggregates.stage_error_count > 0 ? kExitStageErrors : kExitOk;
}

int run_trace(const std::string& file, const std::string& sample, std::ostream& out, std::ostream& err) {
  if (!std::filesystem::is_regular_file(file)) {
    err << "error: trace file not found: " << file << "\n";
    return kExitData;
  }
  auto line = find_trace_line(file, sample);
  if (!line) {
    err << "error: no trace for sample '" << sample << "' in " << file << "\n";
    return kExitData;
  }
  out << format_trace_line(*line);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent text-to-SQL with taxonomy-guided correction", "nl2sql"};
  app.require_subcommand(1);

  RunFlags ask_run;
  AskFlags ask;
  CLI::App* ask_cmd = app.add_subcommand("ask", "Answer one question against one database");
  ask_cmd->add_option("--db", ask.db, "Database file, or db_id under --db-root")->required();
  ask_cmd->add_option("--question", ask.question, "Natural language question")->required();
  ask_cmd->add_option("--db-root", ask.db_root, "Root holding <db_id>/<db_id>.sqlite");
  ask_cmd->add_option("--tables", ask.tables, "tables.json with the schema (default: read the database)")
      ->check(CLI::ExistingFile);
  ask_cmd->add_option("--gold", ask.gold, "Gold SQL; enables the EA verdict and the gold_mismatch trigger");
  add_run_flags(*ask_cmd, ask_run);

  RunFlags eval_run;
  EvalFlags eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a Spider-format question set");
  eval_cmd->add_option("--questions", eval.questions, "Questions file (dev.json format)");
  eval_cmd->add_option("--tables", eval.tables, "tables.json");
  eval_cmd->add_option("--db-root", eval.db_root, "Root holding <db_id>/<db_id>.sqlite");
  eval_cmd->add_option("--offset", eval.offset, "Skip this many samples");
  eval_cmd->add_option("--limit", eval.limit, "Evaluate at most this many samples");
  eval_cmd->add_option("--out", eval.out_dir, "Report directory")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Per-sample JSONL checkpoint; resumes when present");
  eval_cmd->add_option("--parallelism", eval.parallelism, "Samples in flight (default 4)")
      ->check(CLI::PositiveNumber);
  add_run_flags(*eval_cmd, eval_run);

  std::string trace_file;
  std::string trace_sample;
  CLI::App* trace_cmd = app.add_subcommand("trace", "Pretty-print one sample's trace");
  trace_cmd->add_option("--file", trace_file, "Trace JSONL file")->required();
  trace_cmd->add_option("--sample", trace_sample, "Sample id (dataset index, or 'ask')")->required();

  bool taxonomy_tsv = false;
  CLI::App* taxonomy_cmd = app.add_subcommand("taxonomy", "Print the error taxonomy");
  taxonomy_cmd->add_flag("--tsv", taxonomy_tsv, "Tab-separated code, category, title, hint");
  CLI::App* taxonomy_list = taxonomy_cmd->add_subcommand("list", "Same as --tsv");

  std::string cache_dir;
  CLI::App* cache_cmd = app.add_subcommand("cache", "Inspect or clear a replay cache");
  cache_cmd->require_subcommand(1);
  CLI::App* cache_stats = cache_cmd->add_subcommand("stats", "Entry count and size");
  CLI::App* cache_clear = cache_cmd->add_subcommand("clear", "Delete every entry");
  for (CLI::App* cmd : {cache_stats, cache_clear}) {
    cmd->add_option("--dir", cache_dir, "Cache directory")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ask_cmd) {
      return run_ask(ask_run, ask, out);
    }
    if (*eval_cmd) {
      return run_eval(eval_run, eval, out, err);
    }
    if (*trace_cmd) {
      return run_trace(trace_file, trace_sample, out, err);
    }
    if (*taxonomy_cmd) {
      out << (taxonomy_tsv || *taxonomy_list ? render_tsv(default_taxonomy()) : render_summary(default_taxonomy()));
      return kExitOk;
    }
    if (*cache_cmd) {
      if (!std::filesystem::is_directory(cache_dir)) {
        err << "error: cache directory not found: " << cache_dir << "\n";
        return kExitData;
      }
      ReplayCache cache(cache_dir);
      if (*cache_stats) {
        CacheStats stats = cache.stats();
        out << "entries: " << stats.entries << "\nbytes: " << stats.bytes << "\n";
      } else {
        out << "removed " << cache.clear() << " entries\n";
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TemplateError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace nl2sql
