#include "cpcl/cli.hpp"

#include "cpcl/config.hpp"
#include "cpcl/gradcheck.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

namespace cpcl {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is not set");
  if (!fs::exists(path)) throw UsageError(what + " not found: " + path.string());
}

RunConfig load_config(const Options& opt) {
  RunConfig cfg;
  if (!opt.config.empty()) {
    require_file(opt.config, "config");
    cfg = load_run_config(opt.config);
  }
  if (opt.seed) cfg.train.seeds = {*opt.seed};
  if (!opt.out.empty()) cfg.paths.output_dir = opt.out;
  if (const char* env = std::getenv("CPCL_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) {
      throw UsageError(std::string("CPCL_THREADS must be a positive integer, got '") + env + "'");
    }
    cfg.train.threads = std::min(cfg.train.threads, static_cast<int>(cap));
    cfg.experiment.jobs = std::min(cfg.experiment.jobs, static_cast<int>(cap));
  }
  return cfg;
}

std::vector<VideoSample> load_samples(const RunConfig& cfg) {
  require_file(cfg.paths.manifest, "manifest");
  std::vector<VideoSample> samples;
  for (const auto& desc : load_manifest(cfg.paths.manifest)) {
    samples.push_back(resolve_sample(desc, cfg.mfcc));
  }
  if (samples.empty()) throw UsageError("manifest has no samples");
  return samples;
}

SkgStore load_store(const RunConfig& cfg, const Embedder& embedder) {
  require_file(cfg.paths.skg, "SKG");
  return load_skg(cfg.paths.skg, embedder);
}

/// Loads the configured vocabulary, or builds one over every manifest sample.
Vocabulary resolve_vocab(const RunConfig& cfg, const std::vector<VideoSample>& samples) {
  if (!cfg.paths.vocab.empty()) {
    require_file(cfg.paths.vocab, "vocabulary");
    return Vocabulary::load(cfg.paths.vocab);
  }
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return vocab_from_samples(samples, all, cfg.experiment.vocab_min_freq,
                            cfg.experiment.vocab_max_size);
}

std::string metrics_text(const std::string& name, const MetricsReport& m) {
  std::ostringstream os;
  os << format_metrics_table({{name, MeanMetrics{m.accuracy, m.macro_f1, m.recall, m.precision}}});
  os << "tp=" << m.tp << " fp=" << m.fp << " tn=" << m.tn << " fn=" << m.fn << '\n';
  for (const auto& w : m.warnings) os << "warning: " << w << " had a zero denominator\n";
  return os.str();
}

// featurize ---------------------------------------------------------------------------

void featurize_wav(const fs::path& wav, const fs::path& dest, const RunConfig& cfg) {
  const PcmAudio pcm = read_wav(wav);
  if (pcm.sample_rate != cfg.mfcc.sample_rate) {
    throw UsageError(wav.string() + ": sample rate " + std::to_string(pcm.sample_rate) +
                     " does not match mfcc.sample_rate " + std::to_string(cfg.mfcc.sample_rate));
  }
  const Mat mfcc = compute_mfcc(pcm.samples, cfg.mfcc);
  write_feature_file(lift_audio(mfcc, AudioLift::identity(cfg.mfcc.n_mfcc, cfg.model.d)), dest);
}

int cmd_featurize(const Options& opt, const std::string& input, std::ostream& out) {
  const RunConfig cfg = load_config(opt);
  require_file(input, "input");
  const fs::path out_dir = cfg.paths.output_dir;
  fs::create_directories(out_dir);
  const fs::path in(input);
  if (in.extension() == ".wav" || in.extension() == ".WAV") {
    const fs::path dest = out_dir / (in.stem().string() + ".audio.cpcl");
    featurize_wav(in, dest, cfg);
    out << dest.string() << '\n';
    return kExitOk;
  }
  int written = 0;
  for (const auto& desc : load_manifest(in)) {
    if (!desc.audio_is_wav()) continue;
    require_file(desc.audio_feat_or_wav, "sample " + desc.id + " audio");
    const fs::path dest = out_dir / (desc.id + ".audio.cpcl");
    featurize_wav(desc.audio_feat_or_wav, dest, cfg);
    out << dest.string() << '\n';
    ++written;
  }
  out << "featurized " << written << " WAV file(s)\n";
  return kExitOk;
}

// clean-comments -----------------------------------------------------------------------

int cmd_clean_comments(const std::string& in_path, const std::string& out_path,
                       std::ostream& out) {
  require_file(in_path, "comments file");
  CleaningSummary summary;
  const auto cleaned = clean_comments(read_comments_file(in_path), &summary);
  const fs::path dest(out_path);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  write_comments_file(cleaned, dest);
  const json j{{"input", summary.input},
               {"kept", summary.kept},
               {"dropped_dup", summary.dropped_dup},
               {"dropped_emoji", summary.dropped_emoji},
               {"dropped_meaningless", summary.dropped_meaningless},
               {"dropped_level", summary.dropped_level}};
  out << j.dump() << '\n';
  return kExitOk;
}

// build-vocab --------------------------------------------------------------------------

int cmd_build_vocab(const Options& opt, std::ostream& out) {
  RunConfig cfg = load_config(opt);
  cfg.paths.vocab.clear();  // always rebuild
  const auto samples = load_samples(cfg);
  const Vocabulary vocab = resolve_vocab(cfg, samples);
  const fs::path dest = cfg.paths.output_dir / "vocab.txt";
  fs::create_directories(cfg.paths.output_dir);
  vocab.save(dest);
  out << "vocabulary of " << vocab.size() << " tokens written to " << dest.string() << '\n';
  return kExitOk;
}

// train --------------------------------------------------------------------------------

int cmd_train(const Options& opt, std::ostream& out) {
  RunConfig cfg = load_config(opt);
  const auto samples = load_samples(cfg);
  const HashingEmbedder embedder(cfg.model.sentiment_dim);
  const SkgStore skg = load_store(cfg, embedder);
  const Vocabulary vocab = resolve_vocab(cfg, samples);
  cfg.model.vocab_size = static_cast<int>(vocab.size());
  cfg.validate();

  const BranchResources res{&vocab, &skg, &embedder};
  std::vector<PreparedSample> prepared;
  std::vector<int> labels;
  for (const auto& s : samples) {
    prepared.push_back(prepare_sample(s, res, cfg.model));
    labels.push_back(s.label);
  }

  const fs::path dir = cfg.paths.output_dir;
  fs::create_directories(dir);
  vocab.save(dir / "vocab.txt");
  write_text(dir / "config.json", to_json(cfg).dump(2) + '\n');

  std::vector<MetricsReport> reports;
  json report;
  for (const auto seed : cfg.train.seeds) {
    const auto [train_idx, eval_idx] =
        stratified_split(labels, cfg.experiment.holdout_fraction, seed);
    std::vector<PreparedSample> train_set, eval_set;
    for (auto i : train_idx) train_set.push_back(prepared[i]);
    for (auto i : eval_idx) eval_set.push_back(prepared[i]);
    const SeedRun run = train_seed(train_set, eval_set, cfg.model, cfg.train, seed);
    const std::string tag = "seed" + std::to_string(seed);
    write_text(dir / ("epoch_log_" + tag + ".jsonl"), epoch_log_jsonl(run.log));
    save_params(run.params, dir / ("params_" + tag + ".bin"));
    reports.push_back(run.metrics);
    report["seeds"].push_back({{"seed", seed}, {"metrics", to_json(run.metrics)}});
  }
  const MeanMetrics mean = mean_metrics(reports);
  report["mean"] = to_json(mean);
  write_text(dir / "train_report.json", report.dump(2) + '\n');
  const std::string table = format_metrics_table({{"CPCLDetector", mean}});
  write_text(dir / "train_report.txt", table);
  out << table;
  return kExitOk;
}

// eval ---------------------------------------------------------------------------------

MetricsReport metrics_from_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open predictions file " + path.string());
  std::vector<int> preds, labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const int p = j.at("pred").get<int>();
      const int l = j.at("label").get<int>();
      if ((p != 0 && p != 1) || (l != 0 && l != 1)) throw ParseError("pred and label must be 0 or 1", lineno);
      preds.push_back(p);
      labels.push_back(l);
    } catch (const json::exception& e) {
      throw ParseError(std::string("predictions: ") + e.what(), lineno);
    }
  }
  if (preds.empty()) throw UsageError("predictions file is empty");
  return compute_metrics(preds, labels);
}

int cmd_eval(const Options& opt, const std::string& predictions, const std::string& params,
             std::ostream& out) {
  RunConfig cfg = load_config(opt);
  MetricsReport m;
  if (!predictions.empty()) {
    require_file(predictions, "predictions file");
    m = metrics_from_predictions(predictions);
  } else {
    if (params.empty()) throw UsageError("eval needs --params or --predictions");
    require_file(params, "parameter snapshot");
    if (cfg.paths.vocab.empty()) throw UsageError("eval with --params needs paths.vocab");
    const auto samples = load_samples(cfg);
    const HashingEmbedder embedder(cfg.model.sentiment_dim);
    const SkgStore skg = load_store(cfg, embedder);
    const Vocabulary vocab = resolve_vocab(cfg, samples);
    cfg.model.vocab_size = static_cast<int>(vocab.size());
    cfg.validate();
    ModelParams p = ModelParams::zeros(cfg.model);
    load_params(p, params);
    const BranchResources res{&vocab, &skg, &embedder};
    std::vector<PreparedSample> prepared;
    for (const auto& s : samples) prepared.push_back(prepare_sample(s, res, cfg.model));
    m = evaluate(prepared, p, cfg.model);
  }
  const fs::path dir = cfg.paths.output_dir;
  write_text(dir / "eval_report.json", to_json(m).dump(2) + '\n');
  const std::string text = metrics_text("CPCLDetector", m);
  write_text(dir / "eval_report.txt", text);
  out << text;
  return kExitOk;
}

// ablate -------------------------------------------------------------------------------

int cmd_ablate(const Options& opt, std::ostream& out) {
  const RunConfig cfg = load_config(opt);
  const auto samples = load_samples(cfg);
  const HashingEmbedder embedder(cfg.model.sentiment_dim);
  const SkgStore skg = load_store(cfg, embedder);
  const AblationResult result =
      run_ablation(samples, skg, embedder, cfg.model, cfg.train, cfg.experiment);
  const fs::path dir = cfg.paths.output_dir;
  write_text(dir / "ablation.json", result.to_json().dump(2) + '\n');
  write_text(dir / "ablation.txt", result.format_table());
  out << result.format_table();
  return kExitOk;
}

// gradcheck ----------------------------------------------------------------------------

int cmd_gradcheck(const Options& opt, const std::vector<std::string>& ops, std::ostream& out) {
  const RunConfig cfg = load_config(opt);
  const auto names = ops.empty() ? grad_check_ops() : ops;
  const std::uint64_t seed = opt.seed.value_or(20240601);
  json j;
  bool all_ok = true;
  std::ostringstream table;
  for (const auto& name : names) {
    const GradCheckReport r = grad_check(name, cfg.gradcheck_instances, cfg.gradcheck_h, seed);
    all_ok = all_ok && r.passed;
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %-4s max_rel_err=%.3e entries=%zu worst=%s\n",
                  name.c_str(), r.passed ? "ok" : "FAIL", r.max_rel_error, r.entries,
                  r.worst.c_str());
    table << line;
    j["ops"].push_back({{"op", name},
                        {"passed", r.passed},
                        {"max_rel_error", r.max_rel_error},
                        {"entries", r.entries},
                        {"instances", r.instances},
                        {"worst", r.worst}});
  }
  j["tolerance"] = kGradCheckTolerance;
  j["passed"] = all_ok;
  const fs::path dir = cfg.paths.output_dir;
  write_text(dir / "gradcheck.json", j.dump(2) + '\n');
  write_text(dir / "gradcheck.txt", table.str());
  out << table.str();
  if (!all_ok) throw VerificationFailure("gradient check exceeded tolerance");
  return kExitOk;
}

// make-synthetic -----------------------------------------------------------------------

int cmd_make_synthetic(const Options& opt, std::ostream& out) {
  const RunConfig cfg = load_config(opt);
  const std::uint64_t seed = opt.seed.value_or(7);
  const SyntheticCorpus corpus = generate_synthetic(cfg.synthetic, cfg.mfcc, seed);
  const fs::path manifest = write_synthetic_corpus(corpus, cfg.paths.output_dir);
  out << manifest.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal PCL detection pipeline", "cpcl"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "RunConfig JSON file");
    sub->add_option("--seed", seed, "Single seed overriding train.seeds");
    sub->add_option("--out", opt.out, "Output directory overriding paths.output_dir");
  };

  std::string featurize_input;
  auto* featurize = app.add_subcommand("featurize", "WAV (or manifest WAVs) to audio feature files");
  featurize->add_option("input", featurize_input, "WAV file or manifest")->required();
  add_common(featurize);

  std::string clean_in, clean_out;
  auto* clean = app.add_subcommand("clean-comments", "Clean a comments JSONL file");
  clean->add_option("input", clean_in, "Raw comments JSONL")->required();
  clean->add_option("output", clean_out, "Cleaned comments JSONL")->required();

  auto* vocab = app.add_subcommand("build-vocab", "Build the comment vocabulary");
  add_common(vocab);
  auto* train = app.add_subcommand("train", "Train one model per seed");
  add_common(train);

  std::string predictions, params;
  auto* eval = app.add_subcommand("eval", "Compute metrics");
  add_common(eval);
  eval->add_option("--predictions", predictions, "JSONL of {\"pred\", \"label\"}");
  eval->add_option("--params", params, "Parameter snapshot to evaluate on the manifest");

  auto* ablate = app.add_subcommand("ablate", "Four-variant ablation study");
  add_common(ablate);

  std::vector<std::string> ops;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gradcheck);
  gradcheck->add_option("--op", ops, "Restrict to these ops");

  auto* synth = app.add_subcommand("make-synthetic", "Write a synthetic corpus");
  add_common(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    for (auto* sub : {featurize, vocab, train, eval, ablate, gradcheck, synth}) {
      if (sub->parsed() && sub->count("--seed") > 0) opt.seed = seed;
    }
    if (featurize->parsed()) return cmd_featurize(opt, featurize_input, out);
    if (clean->parsed()) return cmd_clean_comments(clean_in, clean_out, out);
    if (vocab->parsed()) return cmd_build_vocab(opt, out);
    if (train->parsed()) return cmd_train(opt, out);
    if (eval->parsed()) return cmd_eval(opt, predictions, params, out);
    if (ablate->parsed()) return cmd_ablate(opt, out);
    if (gradcheck->parsed()) return cmd_gradcheck(opt, ops, out);
    if (synth->parsed()) return cmd_make_synthetic(opt, out);
  } catch (const VerificationFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitVerification;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << " (line " << e.line() << ")\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    // Config, argument, path and file-format problems.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitInternal;
}

}  // namespace cpcl
