#include "cpcl/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string>

namespace cpcl {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& doc, std::string name, std::initializer_list<const char*> keys)
      : name_(std::move(name)) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    for (const auto& [key, value] : doc.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
    doc_ = &doc;
  }

  template <typename T>
  void read(const char* key, T& out) const {
    if (!doc_ || !doc_->contains(key)) return;
    try {
      out = doc_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void read_path(const char* key, std::filesystem::path& out,
                 const std::filesystem::path& base) const {
    std::string s;
    read(key, s);
    if (s.empty()) return;
    const std::filesystem::path p(s);
    out = p.is_absolute() ? p : base / p;
  }

  const json& child(const char* key) const {
    static const json null;
    return doc_ && doc_->contains(key) ? doc_->at(key) : null;
  }

 private:
  std::string name_;
  const json* doc_ = nullptr;
};

void read_tau(const Section& s, double& tau) {
  json raw;
  s.read("tau", raw);
  if (raw.is_null()) return;
  if (raw.is_string() && (raw == "inf" || raw == "balanced")) {
    tau = OtConfig::balanced;
  } else if (raw.is_number()) {
    tau = raw.get<double>();
  } else {
    throw ConfigError("config key 'model.ot.tau' must be a number or \"inf\"");
  }
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  const Section root(doc, "config",
                     {"model", "train", "mfcc", "experiment", "synthetic", "paths", "gradcheck"});

  const Section m(root.child("model"), "model",
                  {"d", "d_model", "d_gate", "d_state", "embed_dim", "conv_widths", "n_filters",
                   "seq_len", "max_comments", "sentiment_dim", "sentiment_hidden", "alpha_kg",
                   "skg_top_k", "skg_threshold", "audio_lift", "n_mfcc", "mask_comment",
                   "mask_sentiment", "ot", "mmd"});
  m.read("d", c.model.d);
  m.read("d_model", c.model.d_model);
  m.read("d_gate", c.model.d_gate);
  m.read("d_state", c.model.d_state);
  m.read("embed_dim", c.model.embed_dim);
  m.read("conv_widths", c.model.conv_widths);
  m.read("n_filters", c.model.n_filters);
  m.read("seq_len", c.model.seq_len);
  m.read("max_comments", c.model.max_comments);
  m.read("sentiment_dim", c.model.sentiment_dim);
  m.read("sentiment_hidden", c.model.sentiment_hidden);
  m.read("alpha_kg", c.model.alpha_kg);
  m.read("skg_top_k", c.model.skg_top_k);
  m.read("skg_threshold", c.model.skg_threshold);
  m.read("audio_lift", c.model.audio_lift);
  m.read("n_mfcc", c.model.n_mfcc);
  m.read("mask_comment", c.model.mask_comment);
  m.read("mask_sentiment", c.model.mask_sentiment);
  const Section ot(m.child("ot"), "model.ot", {"epsilon", "tau", "max_iters", "tol"});
  ot.read("epsilon", c.model.ot.epsilon);
  read_tau(ot, c.model.ot.tau);
  ot.read("max_iters", c.model.ot.max_iters);
  ot.read("tol", c.model.ot.tol);
  const Section mmd(m.child("mmd"), "model.mmd", {"bandwidths", "median_heuristic", "multipliers"});
  mmd.read("bandwidths", c.model.mmd.bandwidths);
  mmd.read("median_heuristic", c.model.mmd.median_heuristic);
  mmd.read("multipliers", c.model.mmd.multipliers);

  const Section t(root.child("train"), "train",
                  {"epochs", "beta1", "beta2", "weight_decay", "eta_max", "eta_min", "t_max",
                   "batch_size", "seeds", "lambda_mmd", "adam_eps", "focal_gamma", "threads"});
  t.read("epochs", c.train.epochs);
  t.read("beta1", c.train.beta1);
  t.read("beta2", c.train.beta2);
  t.read("weight_decay", c.train.weight_decay);
  t.read("eta_max", c.train.eta_max);
  t.read("eta_min", c.train.eta_min);
  t.read("t_max", c.train.t_max);
  t.read("batch_size", c.train.batch_size);
  t.read("seeds", c.train.seeds);
  t.read("lambda_mmd", c.train.lambda_mmd);
  t.read("adam_eps", c.train.adam_eps);
  t.read("focal_gamma", c.train.focal_gamma);
  t.read("threads", c.train.threads);

  const Section a(root.child("mfcc"), "mfcc",
                  {"sample_rate", "frame_len", "hop", "n_fft", "n_mels", "n_mfcc", "fmin", "fmax",
                   "log_floor"});
  a.read("sample_rate", c.mfcc.sample_rate);
  a.read("frame_len", c.mfcc.frame_len);
  a.read("hop", c.mfcc.hop);
  a.read("n_fft", c.mfcc.n_fft);
  a.read("n_mels", c.mfcc.n_mels);
  a.read("n_mfcc", c.mfcc.n_mfcc);
  a.read("fmin", c.mfcc.fmin);
  a.read("fmax", c.mfcc.fmax);
  a.read("log_floor", c.mfcc.log_floor);

  const Section e(root.child("experiment"), "experiment",
                  {"holdout_fraction", "vocab_min_freq", "vocab_max_size", "jobs"});
  e.read("holdout_fraction", c.experiment.holdout_fraction);
  e.read("vocab_min_freq", c.experiment.vocab_min_freq);
  e.read("vocab_max_size", c.experiment.vocab_max_size);
  e.read("jobs", c.experiment.jobs);

  const Section s(root.child("synthetic"), "synthetic",
                  {"n_samples", "positive_fraction", "dim", "video_tokens", "text_tokens",
                   "audio_samples", "feature_shift", "feature_noise", "comment_only_fraction",
                   "sentiment_only_fraction", "topical_tokens", "sentiment_phrases"});
  s.read("n_samples", c.synthetic.n_samples);
  s.read("positive_fraction", c.synthetic.positive_fraction);
  s.read("dim", c.synthetic.dim);
  s.read("video_tokens", c.synthetic.video_tokens);
  s.read("text_tokens", c.synthetic.text_tokens);
  s.read("audio_samples", c.synthetic.audio_samples);
  s.read("feature_shift", c.synthetic.feature_shift);
  s.read("feature_noise", c.synthetic.feature_noise);
  s.read("comment_only_fraction", c.synthetic.comment_only_fraction);
  s.read("sentiment_only_fraction", c.synthetic.sentiment_only_fraction);
  s.read("topical_tokens", c.synthetic.topical_tokens);
  s.read("sentiment_phrases", c.synthetic.sentiment_phrases);

  const Section p(root.child("paths"), "paths", {"manifest", "skg", "vocab", "output_dir"});
  p.read_path("manifest", c.paths.manifest, base_dir);
  p.read_path("skg", c.paths.skg, base_dir);
  p.read_path("vocab", c.paths.vocab, base_dir);
  p.read_path("output_dir", c.paths.output_dir, base_dir);

  const Section g(root.child("gradcheck"), "gradcheck", {"instances", "h"});
  g.read("instances", c.gradcheck_instances);
  g.read("h", c.gradcheck_h);

  c.validate();
  return c;
}

void RunConfig::validate() const {
  try {
    model.validate();
    train.validate();
    mfcc.validate();
    experiment.validate();
    synthetic.validate();
    require(gradcheck_instances >= 1, "gradcheck.instances must be positive");
    require(gradcheck_h > 0.0, "gradcheck.h must be positive");
    require(!model.audio_lift || model.n_mfcc == mfcc.n_mfcc,
            "model.n_mfcc must equal mfcc.n_mfcc when audio_lift is on");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  const auto& m = c.model;
  json tau = m.ot.is_balanced() ? json("inf") : json(m.ot.tau);
  return {
      {"model",
       {{"d", m.d},
        {"d_model", m.d_model},
        {"d_gate", m.d_gate},
        {"d_state", m.d_state},
        {"embed_dim", m.embed_dim},
        {"conv_widths", m.conv_widths},
        {"n_filters", m.n_filters},
        {"seq_len", m.seq_len},
        {"max_comments", m.max_comments},
        {"sentiment_dim", m.sentiment_dim},
        {"sentiment_hidden", m.sentiment_hidden},
        {"alpha_kg", m.alpha_kg},
        {"skg_top_k", m.skg_top_k},
        {"skg_threshold", m.skg_threshold},
        {"audio_lift", m.audio_lift},
        {"n_mfcc", m.n_mfcc},
        {"mask_comment", m.mask_comment},
        {"mask_sentiment", m.mask_sentiment},
        {"ot", {{"epsilon", m.ot.epsilon}, {"tau", tau}, {"max_iters", m.ot.max_iters},
                {"tol", m.ot.tol}}},
        {"mmd", {{"bandwidths", m.mmd.bandwidths}, {"median_heuristic", m.mmd.median_heuristic},
                 {"multipliers", m.mmd.multipliers}}}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"weight_decay", c.train.weight_decay},
        {"eta_max", c.train.eta_max},
        {"eta_min", c.train.eta_min},
        {"t_max", c.train.t_max},
        {"batch_size", c.train.batch_size},
        {"seeds", c.train.seeds},
        {"lambda_mmd", c.train.lambda_mmd},
        {"adam_eps", c.train.adam_eps},
        {"focal_gamma", c.train.focal_gamma},
        {"threads", c.train.threads}}},
      {"mfcc",
       {{"sample_rate", c.mfcc.sample_rate},
        {"frame_len", c.mfcc.frame_len},
        {"hop", c.mfcc.hop},
        {"n_fft", c.mfcc.n_fft},
        {"n_mels", c.mfcc.n_mels},
        {"n_mfcc", c.mfcc.n_mfcc},
        {"fmin", c.mfcc.fmin},
        {"fmax", c.mfcc.fmax},
        {"log_floor", c.mfcc.log_floor}}},
      {"experiment",
       {{"holdout_fraction", c.experiment.holdout_fraction},
        {"vocab_min_freq", c.experiment.vocab_min_freq},
        {"vocab_max_size", c.experiment.vocab_max_size},
        {"jobs", c.experiment.jobs}}},
      {"synthetic",
       {{"n_samples", c.synthetic.n_samples},
        {"positive_fraction", c.synthetic.positive_fraction},
        {"dim", c.synthetic.dim},
        {"video_tokens", c.synthetic.video_tokens},
        {"text_tokens", c.synthetic.text_tokens},
        {"audio_samples", c.synthetic.audio_samples},
        {"feature_shift", c.synthetic.feature_shift},
        {"feature_noise", c.synthetic.feature_noise},
        {"comment_only_fraction", c.synthetic.comment_only_fraction},
        {"sentiment_only_fraction", c.synthetic.sentiment_only_fraction},
        {"topical_tokens", c.synthetic.topical_tokens},
        {"sentiment_phrases", c.synthetic.sentiment_phrases}}},
      {"paths",
       {{"manifest", c.paths.manifest.string()},
        {"skg", c.paths.skg.string()},
        {"vocab", c.paths.vocab.string()},
        {"output_dir", c.paths.output_dir.string()}}},
      {"gradcheck", {{"instances", c.gradcheck_instances}, {"h", c.gradcheck_h}}},
  };
}

}  // namespace cpcl
