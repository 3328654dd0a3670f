#include "cpcl/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace cpcl {

namespace {

class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  void xavier(Mat& m) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(-a, a);
  }
  void xavier(Vec& v, Eigen::Index fan_in) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + 1));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = uniform(-a, a);
  }
  void fill(Mat& m, double lo, double hi) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
  }

 private:
  std::mt19937_64 rng_;
};

void add_view(std::vector<ParamView>& out, const std::string& owner, const std::string& name,
              double* data, Eigen::Index size) {
  out.push_back({owner + "." + name, owner, data, static_cast<std::size_t>(size)});
}

void add_view(std::vector<ParamView>& out, const std::string& owner, const std::string& name,
              Mat& m) {
  add_view(out, owner, name, m.data(), m.size());
}

void add_view(std::vector<ParamView>& out, const std::string& owner, const std::string& name,
              Vec& v) {
  add_view(out, owner, name, v.data(), v.size());
}

void accumulate(ModelParams& g, const ConcatProjectGrad& cp) {
  g.fusion.proj_w += cp.proj_w;
  g.fusion.proj_b += cp.proj_b;
  g.fusion.ln_gamma += cp.ln_gamma;
  g.fusion.ln_beta += cp.ln_beta;
}

}  // namespace

void ModelConfig::validate() const {
  require(d > 0 && d_model > 0 && d_gate > 0 && d_state > 0, "model dims must be positive");
  require(vocab_size >= 2, "vocab_size must include PAD and UNK");
  require(embed_dim > 0 && n_filters > 0 && !conv_widths.empty(), "bad TextCNN shape");
  for (int w : conv_widths) require(w >= 1, "filter widths must be positive");
  require(*std::max_element(conv_widths.begin(), conv_widths.end()) <= seq_len,
          "seq_len must be at least the widest filter");
  require(max_comments >= 1, "max_comments must be positive");
  require(sentiment_dim > 0 && sentiment_hidden > 0, "bad sentiment head shape");
  require(alpha_kg >= 0.0 && alpha_kg <= 1.0, "alpha_kg must lie in [0, 1]");
  require(mask_comment == 0 || mask_comment == 1, "mask_comment must be 0 or 1");
  require(mask_sentiment == 0 || mask_sentiment == 1, "mask_sentiment must be 0 or 1");
  if (audio_lift) require(n_mfcc > 0, "n_mfcc must be positive");
  mmd.validate();
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  ModelParams p;
  if (cfg.audio_lift) {
    p.lift.proj = Mat::Zero(cfg.n_mfcc, cfg.d);
    p.lift.bias = Vec::Zero(cfg.d);
  } else {
    p.lift.proj = Mat(0, 0);
    p.lift.bias = Vec(0);
  }
  p.fusion = FusionParams::zeros(cfg.d, cfg.d_model, cfg.d_gate, cfg.d_state);
  p.fusion.ln_gamma.setZero();
  p.textcnn = TextCnnParams::zeros(cfg.vocab_size, cfg.embed_dim, cfg.conv_widths, cfg.n_filters);
  p.sentiment = SentimentHeadParams::zeros(cfg.sentiment_dim, cfg.sentiment_hidden);
  p.sentiment.alpha_kg = 0.0;
  p.head = HeadParams::zeros(cfg.d_model);
  p.head.mask_comment = cfg.mask_comment;
  p.head.mask_sentiment = cfg.mask_sentiment;
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p = zeros(cfg);
  Init rng(seed);
  if (cfg.audio_lift) rng.xavier(p.lift.proj);

  auto& f = p.fusion;
  rng.xavier(f.proj_w);
  f.ln_gamma.setOnes();
  rng.xavier(f.gate_w1);
  rng.xavier(f.gate_w2, f.gate_w1.cols());
  auto& s = f.ssm;
  for (Eigen::Index c = 0; c < s.log_a.rows(); ++c) {
    for (Eigen::Index k = 0; k < s.log_a.cols(); ++k) s.log_a(c, k) = std::log(static_cast<double>(k + 1));
  }
  rng.xavier(s.delta_w);
  s.delta_w *= 0.1;
  for (Eigen::Index c = 0; c < s.delta_b.size(); ++c) {
    // Step sizes log-uniform in [1e-3, 1e-1], stored through the inverse softplus.
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    s.delta_b[c] = std::log(std::expm1(dt));
  }
  rng.xavier(s.b_w);
  rng.xavier(s.c_w);

  auto& t = p.textcnn;
  rng.fill(t.embedding, -0.5, 0.5);
  t.embedding.row(Vocabulary::kPad).setZero();
  for (auto& w : t.filters) rng.xavier(w);
  rng.xavier(t.head_w);

  rng.xavier(p.sentiment.w1);
  rng.xavier(p.sentiment.w2);
  p.sentiment.alpha_kg = cfg.alpha_kg;

  rng.xavier(p.head.w);
  return p;
}

std::vector<ParamView> param_views(ModelParams& p) {
  std::vector<ParamView> v;
  if (p.lift.proj.size() > 0) {
    add_view(v, "audio_lift", "proj", p.lift.proj);
    add_view(v, "audio_lift", "bias", p.lift.bias);
  }
  auto& f = p.fusion;
  add_view(v, "fusion", "proj_w", f.proj_w);
  add_view(v, "fusion", "proj_b", f.proj_b);
  add_view(v, "fusion", "ln_gamma", f.ln_gamma);
  add_view(v, "fusion", "ln_beta", f.ln_beta);
  add_view(v, "fusion", "gate_w1", f.gate_w1);
  add_view(v, "fusion", "gate_b1", f.gate_b1);
  add_view(v, "fusion", "gate_w2", f.gate_w2);
  add_view(v, "fusion", "gate_b2", &f.gate_b2, 1);
  add_view(v, "ssm", "log_a", f.ssm.log_a);
  add_view(v, "ssm", "delta_w", f.ssm.delta_w);
  add_view(v, "ssm", "delta_b", f.ssm.delta_b);
  add_view(v, "ssm", "b_w", f.ssm.b_w);
  add_view(v, "ssm", "c_w", f.ssm.c_w);
  add_view(v, "ssm", "d_skip", f.ssm.d_skip);
  auto& t = p.textcnn;
  add_view(v, "textcnn", "embedding", t.embedding);
  for (std::size_t i = 0; i < t.filters.size(); ++i) {
    const auto w = std::to_string(t.widths[i]);
    add_view(v, "textcnn", "filter_w" + w, t.filters[i]);
    add_view(v, "textcnn", "bias_w" + w, t.biases[i]);
  }
  add_view(v, "textcnn", "head_w", t.head_w);
  add_view(v, "textcnn", "head_b", t.head_b);
  add_view(v, "sentiment", "alpha_kg", &p.sentiment.alpha_kg, 1);
  add_view(v, "sentiment", "w1", p.sentiment.w1);
  add_view(v, "sentiment", "b1", p.sentiment.b1);
  add_view(v, "sentiment", "w2", p.sentiment.w2);
  add_view(v, "sentiment", "b2", p.sentiment.b2);
  add_view(v, "head", "w", p.head.w);
  add_view(v, "head", "b", p.head.b);
  return v;
}

std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& v : param_views(const_cast<ModelParams&>(p))) n += v.size;
  return n;
}

void add_into(ModelParams& acc, const ModelParams& g, double scale) {
  auto a = param_views(acc);
  auto b = param_views(const_cast<ModelParams&>(g));
  require(a.size() == b.size(), "add_into: parameter layouts differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i].size == b[i].size, "add_into: size mismatch for " + a[i].name);
    for (std::size_t k = 0; k < a[i].size; ++k) a[i].data[k] += scale * b[i].data[k];
  }
}

void save_params(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write parameter snapshot " + path.string());
  for (const auto& v : param_views(const_cast<ModelParams&>(p))) {
    const auto len = static_cast<std::uint32_t>(v.name.size());
    const auto count = static_cast<std::uint64_t>(v.size);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(v.name.data(), len);
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(v.data), static_cast<std::streamsize>(v.size * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void load_params(ModelParams& p, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open parameter snapshot " + path.string());
  for (auto& v : param_views(p)) {
    std::uint32_t len = 0;
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string name(len, '\0');
    in.read(name.data(), len);
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!in || name != v.name || count != v.size) {
      throw std::runtime_error("snapshot does not match model layout at " + v.name);
    }
    in.read(reinterpret_cast<char*>(v.data), static_cast<std::streamsize>(count * sizeof(double)));
  }
  if (!in) throw std::runtime_error("truncated parameter snapshot " + path.string());
}

PreparedSample prepare_sample(const VideoSample& sample, const BranchResources& res,
                              const ModelConfig& cfg) {
  require(res.vocab && res.skg && res.embedder, "prepare_sample: missing branch resources");
  PreparedSample p;
  p.id = sample.id;
  p.label = sample.label;
  p.video = sample.video_feat.tokens;
  p.face = sample.face_feat.tokens;
  p.audio = sample.audio_feat.tokens;
  p.text = sample.text_feat.tokens;
  if (cfg.audio_lift) {
    require(sample.audio_is_mfcc && p.audio.cols() == cfg.n_mfcc,
            "sample " + sample.id + ": audio must be MFCC frames when audio_lift is on");
  } else {
    require(!sample.audio_is_mfcc, "sample " + sample.id + ": MFCC audio needs audio_lift");
  }

  const auto cleaned = clean_comments(sample.comments);
  p.comment_indices = encode_comment_batch(cleaned, *res.vocab, static_cast<std::size_t>(cfg.seq_len),
                                           static_cast<std::size_t>(cfg.max_comments));
  std::string joined;
  CharSegmenter seg;
  const std::size_t n = std::min(cleaned.size(), static_cast<std::size_t>(cfg.max_comments));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& tok : seg.segment(cleaned[i].text)) joined += tok;
  }
  p.comment_embedding = res.embedder->embed(joined);
  require(p.comment_embedding.size() == cfg.sentiment_dim, "embedder dim != sentiment_dim");
  const auto matches = match_embedding(p.comment_embedding, *res.skg,
                                       static_cast<std::size_t>(cfg.skg_top_k), cfg.skg_threshold);
  p.knowledge = knowledge_vector(matches, *res.skg, cfg.sentiment_dim);
  return p;
}

namespace {

struct Trace {
  Mat audio_tokens;
  TransportPlan plan_a, plan_v, plan_f;
  Mat al_a, al_v, al_f;
  ConcatProjectCache cp;
  FsfCache fsf;
  SsmCache ssm;
  Mat encoded;
  TextCnnCache cnn;
  SentimentCache sent;
  HeadCache head;
};

}  // namespace

ForwardOutput forward_backward(const PreparedSample& s, const ModelParams& p,
                               const ModelConfig& cfg, const FocalConfig& focal, double lambda,
                               ModelParams* grads) {
  Trace tr;
  ForwardOutput out;

  tr.audio_tokens = cfg.audio_lift ? lift_audio(s.audio, p.lift).tokens : s.audio;
  tr.plan_a = rot_solve(cost_matrix(tr.audio_tokens, s.text), cfg.ot);
  tr.plan_v = rot_solve(cost_matrix(s.video, s.text), cfg.ot);
  tr.plan_f = rot_solve(cost_matrix(s.face, s.text), cfg.ot);
  tr.al_a = barycentric_project(tr.plan_a, tr.audio_tokens);
  tr.al_v = barycentric_project(tr.plan_v, s.video);
  tr.al_f = barycentric_project(tr.plan_f, s.face);

  const Mat fused = concat_project(s.text, tr.al_a, tr.al_v, tr.al_f, p.fusion, &tr.cp);
  const FsfResult gated = fsf_gate(fused, p.fusion, &tr.fsf);
  tr.encoded = ssm_encode(gated.output, p.fusion.ssm, &tr.ssm);
  const Vec video_vec = pool_video(tr.encoded);
  out.gates = gated.gates;

  out.comment_probs = cfg.mask_comment ? textcnn_score(s.comment_indices, p.textcnn, &tr.cnn)
                                       : Vec::Zero(2);
  out.sentiment_probs = cfg.mask_sentiment
                            ? integrate_and_score(s.comment_embedding, s.knowledge, p.sentiment, &tr.sent)
                            : Vec::Zero(3);
  HeadParams head = p.head;
  head.mask_comment = cfg.mask_comment;
  head.mask_sentiment = cfg.mask_sentiment;
  out.probs = fuse_and_classify(video_vec, out.comment_probs, out.sentiment_probs, head, &tr.head);

  out.focal = focal_loss(out.probs, s.label, focal);
  MmdLossGrad mmd_grad;
  const bool want_mmd_grad = grads != nullptr && lambda > 0.0;
  out.mmd = total_mmd_loss(tr.al_a, tr.al_v, tr.al_f, s.text, cfg.mmd,
                           want_mmd_grad ? &mmd_grad : nullptr);
  out.loss = total_loss(out.focal, out.mmd, lambda);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss for sample " + s.id);
  if (grads == nullptr) return out;

  ModelParams& g = *grads;
  Vec dprobs = Vec::Zero(2);
  dprobs[s.label] = focal_loss_grad(out.probs[s.label], s.label, focal);
  const HeadGrad hg = fuse_and_classify_backward(tr.head, head, dprobs);
  g.head.w += hg.w;
  g.head.b += hg.b;

  if (cfg.mask_comment) {
    const TextCnnGrad cg = textcnn_backward(tr.cnn, p.textcnn, hg.comment_probs);
    g.textcnn.embedding += cg.embedding;
    for (std::size_t i = 0; i < cg.filters.size(); ++i) {
      g.textcnn.filters[i] += cg.filters[i];
      g.textcnn.biases[i] += cg.biases[i];
    }
    g.textcnn.head_w += cg.head_w;
    g.textcnn.head_b += cg.head_b;
  }
  if (cfg.mask_sentiment) {
    const SentimentHeadGrad sg = integrate_and_score_backward(tr.sent, p.sentiment, hg.sentiment_probs);
    g.sentiment.alpha_kg += sg.alpha_kg;
    g.sentiment.w1 += sg.w1;
    g.sentiment.b1 += sg.b1;
    g.sentiment.w2 += sg.w2;
    g.sentiment.b2 += sg.b2;
  }

  const Mat d_encoded = pool_video_backward(tr.encoded.rows(), hg.video_vec);
  const SsmGrad ssm_g = ssm_encode_backward(tr.ssm, p.fusion.ssm, d_encoded);
  g.fusion.ssm.log_a += ssm_g.log_a;
  g.fusion.ssm.delta_w += ssm_g.delta_w;
  g.fusion.ssm.delta_b += ssm_g.delta_b;
  g.fusion.ssm.b_w += ssm_g.b_w;
  g.fusion.ssm.c_w += ssm_g.c_w;
  g.fusion.ssm.d_skip += ssm_g.d_skip;

  const FsfGrad fg = fsf_gate_backward(tr.fsf, p.fusion, ssm_g.input);
  g.fusion.gate_w1 += fg.gate_w1;
  g.fusion.gate_b1 += fg.gate_b1;
  g.fusion.gate_w2 += fg.gate_w2;
  g.fusion.gate_b2 += fg.gate_b2;

  const ConcatProjectGrad cpg = concat_project_backward(tr.cp, p.fusion, fg.input);
  accumulate(g, cpg);

  if (cfg.audio_lift) {
    Mat d_al_a = cpg.audio;
    if (want_mmd_grad) d_al_a += lambda * mmd_grad.audio;
    const Mat d_tokens = barycentric_project_backward(tr.plan_a, d_al_a);
    const AudioLiftGrad lg = lift_audio_backward(s.audio, d_tokens);
    g.lift.proj += lg.proj;
    g.lift.bias += lg.bias;
  }
  return out;
}

Vec predict(const PreparedSample& s, const ModelParams& p, const ModelConfig& cfg) {
  const Mat audio = cfg.audio_lift ? lift_audio(s.audio, p.lift).tokens : s.audio;
  const Mat al_a = barycentric_project(rot_solve(cost_matrix(audio, s.text), cfg.ot), audio);
  const Mat al_v = barycentric_project(rot_solve(cost_matrix(s.video, s.text), cfg.ot), s.video);
  const Mat al_f = barycentric_project(rot_solve(cost_matrix(s.face, s.text), cfg.ot), s.face);
  const Mat fused = concat_project(s.text, al_a, al_v, al_f, p.fusion);
  const Vec video_vec = pool_video(ssm_encode(fsf_gate(fused, p.fusion).output, p.fusion.ssm));
  const Vec cprobs = cfg.mask_comment ? textcnn_score(s.comment_indices, p.textcnn) : Vec::Zero(2);
  const Vec sprobs = cfg.mask_sentiment
                         ? integrate_and_score(s.comment_embedding, s.knowledge, p.sentiment)
                         : Vec::Zero(3);
  HeadParams head = p.head;
  head.mask_comment = cfg.mask_comment;
  head.mask_sentiment = cfg.mask_sentiment;
  return fuse_and_classify(video_vec, cprobs, sprobs, head);
}

}  // namespace cpcl
