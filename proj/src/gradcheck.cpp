#include "cpcl/gradcheck.hpp"

#include "cpcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace cpcl {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  Mat mat(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(-scale, scale);
    return m;
  }
  Vec vec(Eigen::Index n, double scale = 1.0) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(-scale, scale);
    return v;
  }
  int index(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 gen_;
};

template <typename M>
GradTarget target(const std::string& name, M& tensor, const M& grad) {
  GradTarget t{name, tensor.data(), static_cast<std::size_t>(tensor.size()), {}};
  t.analytic.assign(grad.data(), grad.data() + grad.size());
  return t;
}

GradTarget scalar_target(const std::string& name, double& value, double grad) {
  return {name, &value, 1, {grad}};
}

double contract(const Mat& r, const Mat& out) { return (r.array() * out.array()).sum(); }

FusionParams random_fusion(Rng& rng, Eigen::Index d, Eigen::Index dm, Eigen::Index dg,
                           Eigen::Index ds) {
  FusionParams p = FusionParams::zeros(d, dm, dg, ds);
  p.proj_w = rng.mat(4 * d, dm);
  p.proj_b = rng.vec(dm);
  p.ln_gamma = rng.vec(dm);
  p.ln_beta = rng.vec(dm);
  p.gate_w1 = rng.mat(dm, dg);
  p.gate_b1 = rng.vec(dg, 0.5);
  p.gate_w2 = rng.vec(dg);
  p.gate_b2 = rng.uniform(-0.5, 0.5);
  p.ssm.log_a = rng.mat(dm, ds, 0.7);
  p.ssm.delta_w = rng.mat(dm, dm, 0.5);
  p.ssm.delta_b = rng.vec(dm, 0.5);
  p.ssm.b_w = rng.mat(dm, ds);
  p.ssm.c_w = rng.mat(dm, ds);
  p.ssm.d_skip = rng.vec(dm);
  return p;
}

using InstanceFn = std::function<void(Rng&, double, GradCheckReport&)>;

void check_lift(Rng& rng, double h, GradCheckReport& rep) {
  const Mat mfcc = rng.mat(5, 3);
  AudioLift lift{rng.mat(3, 4), rng.vec(4)};
  const Mat r = rng.mat(5, 4);
  const AudioLiftGrad g = lift_audio_backward(mfcc, r);
  std::vector<GradTarget> t{target("proj", lift.proj, g.proj), target("bias", lift.bias, g.bias)};
  check_targets([&] { return contract(r, lift_audio(mfcc, lift).tokens); }, t, h, rep);
}

void check_concat_project(Rng& rng, double h, GradCheckReport& rep) {
  const Eigen::Index q = 4, d = 3, dm = 6;
  Mat text = rng.mat(q, d), a = rng.mat(q, d), v = rng.mat(q, d), f = rng.mat(q, d);
  FusionParams p = random_fusion(rng, d, dm, 4, 3);
  const Mat r = rng.mat(q, dm);
  ConcatProjectCache cache;
  concat_project(text, a, v, f, p, &cache);
  const ConcatProjectGrad g = concat_project_backward(cache, p, r);
  std::vector<GradTarget> t{target("proj_w", p.proj_w, g.proj_w),
                            target("proj_b", p.proj_b, g.proj_b),
                            target("ln_gamma", p.ln_gamma, g.ln_gamma),
                            target("ln_beta", p.ln_beta, g.ln_beta),
                            target("text", text, g.text),
                            target("audio", a, g.audio),
                            target("video", v, g.video),
                            target("face", f, g.face)};
  check_targets([&] { return contract(r, concat_project(text, a, v, f, p)); }, t, h, rep);
}

void check_fsf_gate(Rng& rng, double h, GradCheckReport& rep) {
  const Eigen::Index q = 4, dm = 5;
  Mat x = rng.mat(q, dm);
  FusionParams p = random_fusion(rng, 2, dm, 4, 2);
  const Mat r = rng.mat(q, dm);
  FsfCache cache;
  fsf_gate(x, p, &cache);
  const FsfGrad g = fsf_gate_backward(cache, p, r);
  std::vector<GradTarget> t{target("gate_w1", p.gate_w1, g.gate_w1),
                            target("gate_b1", p.gate_b1, g.gate_b1),
                            target("gate_w2", p.gate_w2, g.gate_w2),
                            scalar_target("gate_b2", p.gate_b2, g.gate_b2),
                            target("input", x, g.input)};
  check_targets([&] { return contract(r, fsf_gate(x, p).output); }, t, h, rep);
}

void check_ssm_encode(Rng& rng, double h, GradCheckReport& rep) {
  const Eigen::Index q = 4, dm = 4, ds = 3;
  Mat x = rng.mat(q, dm);
  FusionParams fp = random_fusion(rng, 2, dm, 3, ds);
  SsmParams& p = fp.ssm;
  const Mat r = rng.mat(q, dm);
  SsmCache cache;
  ssm_encode(x, p, &cache);
  const SsmGrad g = ssm_encode_backward(cache, p, r);
  std::vector<GradTarget> t{target("log_a", p.log_a, g.log_a),
                            target("delta_w", p.delta_w, g.delta_w),
                            target("delta_b", p.delta_b, g.delta_b),
                            target("b_w", p.b_w, g.b_w),
                            target("c_w", p.c_w, g.c_w),
                            target("d_skip", p.d_skip, g.d_skip),
                            target("input", x, g.input)};
  check_targets([&] { return contract(r, ssm_encode(x, p)); }, t, h, rep);
}

void check_pool_video(Rng& rng, double h, GradCheckReport& rep) {
  Mat x = rng.mat(4, 5);
  const Vec r = rng.vec(5);
  const Mat g = pool_video_backward(x.rows(), r);
  std::vector<GradTarget> t{target("input", x, g)};
  check_targets([&] { return r.dot(pool_video(x)); }, t, h, rep);
}

void check_barycentric(Rng& rng, double h, GradCheckReport& rep) {
  Mat src = rng.mat(5, 3);
  const Mat tgt = rng.mat(4, 3);
  const TransportPlan plan = rot_solve(cost_matrix(src, tgt), OtConfig{});
  const Mat r = rng.mat(4, 3);
  const Mat g = barycentric_project_backward(plan, r);
  std::vector<GradTarget> t{target("src", src, g)};
  check_targets([&] { return contract(r, barycentric_project(plan, src)); }, t, h, rep);
}

void check_textcnn(Rng& rng, double h, GradCheckReport& rep) {
  TextCnnParams p = TextCnnParams::zeros(10, 4, {2, 3}, 3);
  p.embedding = rng.mat(10, 4);
  for (auto& f : p.filters) f = rng.mat(f.rows(), f.cols());
  for (auto& b : p.biases) b = rng.vec(b.size(), 0.3);
  p.head_w = rng.mat(p.head_w.rows(), 2);
  p.head_b = rng.vec(2);
  std::vector<int> idx(8);
  for (auto& i : idx) i = rng.index(10);
  const Vec r = rng.vec(2);
  TextCnnCache cache;
  textcnn_score(idx, p, &cache);
  const TextCnnGrad g = textcnn_backward(cache, p, r);
  std::vector<GradTarget> t{target("embedding", p.embedding, g.embedding),
                            target("head_w", p.head_w, g.head_w),
                            target("head_b", p.head_b, g.head_b)};
  for (std::size_t i = 0; i < p.filters.size(); ++i) {
    t.push_back(target("filter" + std::to_string(i), p.filters[i], g.filters[i]));
    t.push_back(target("bias" + std::to_string(i), p.biases[i], g.biases[i]));
  }
  check_targets([&] { return r.dot(textcnn_score(idx, p)); }, t, h, rep);
}

void check_sentiment_head(Rng& rng, double h, GradCheckReport& rep) {
  SentimentHeadParams p = SentimentHeadParams::zeros(6, 5);
  p.alpha_kg = rng.uniform(0.1, 0.9);
  p.w1 = rng.mat(6, 5);
  p.b1 = rng.vec(5, 0.3);
  p.w2 = rng.mat(5, 3);
  p.b2 = rng.vec(3);
  const Vec comment = rng.vec(6), knowledge = rng.vec(6);
  const Vec r = rng.vec(3);
  SentimentCache cache;
  integrate_and_score(comment, knowledge, p, &cache);
  const SentimentHeadGrad g = integrate_and_score_backward(cache, p, r);
  std::vector<GradTarget> t{scalar_target("alpha_kg", p.alpha_kg, g.alpha_kg),
                            target("w1", p.w1, g.w1), target("b1", p.b1, g.b1),
                            target("w2", p.w2, g.w2), target("b2", p.b2, g.b2)};
  check_targets([&] { return r.dot(integrate_and_score(comment, knowledge, p)); }, t, h, rep);
}

void check_fuse_and_classify(Rng& rng, double h, GradCheckReport& rep) {
  HeadParams p = HeadParams::zeros(4);
  p.w = rng.mat(9, 2);
  p.b = rng.vec(2);
  Vec video = rng.vec(4), cprobs = rng.vec(2), sprobs = rng.vec(3);
  const Vec r = rng.vec(2);
  HeadCache cache;
  fuse_and_classify(video, cprobs, sprobs, p, &cache);
  const HeadGrad g = fuse_and_classify_backward(cache, p, r);
  std::vector<GradTarget> t{target("w", p.w, g.w), target("b", p.b, g.b),
                            target("video_vec", video, g.video_vec),
                            target("comment_probs", cprobs, g.comment_probs),
                            target("sentiment_probs", sprobs, g.sentiment_probs)};
  check_targets([&] { return r.dot(fuse_and_classify(video, cprobs, sprobs, p)); }, t, h, rep);
}

void check_focal(Rng& rng, double h, GradCheckReport& rep) {
  FocalConfig cfg;
  cfg.gamma = rng.uniform(0.0, 3.0);
  cfg.alpha = {rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
  const int label = rng.index(2);
  double p = rng.uniform(0.05, 0.95);
  auto probs = [&] {
    Vec v(2);
    v[label] = p;
    v[1 - label] = 1.0 - p;
    return v;
  };
  std::vector<GradTarget> t{scalar_target("p_label", p, focal_loss_grad(p, label, cfg))};
  check_targets([&] { return focal_loss(probs(), label, cfg); }, t, h, rep);
}

void check_total_mmd(Rng& rng, double h, GradCheckReport& rep) {
  Mat a = rng.mat(4, 3), v = rng.mat(4, 3), f = rng.mat(4, 3), text = rng.mat(4, 3);
  const MmdConfig cfg;
  MmdLossGrad g;
  total_mmd_loss(a, v, f, text, cfg, &g);
  std::vector<GradTarget> t{target("aligned_audio", a, g.audio),
                            target("aligned_video", v, g.video),
                            target("aligned_face", f, g.face), target("text", text, g.text)};
  check_targets([&] { return total_mmd_loss(a, v, f, text, cfg); }, t, h, rep);
}

void check_full_model(Rng& rng, double h, GradCheckReport& rep) {
  ModelConfig cfg;
  cfg.d = 3;
  cfg.d_model = 5;
  cfg.d_gate = 3;
  cfg.d_state = 2;
  cfg.vocab_size = 8;
  cfg.embed_dim = 3;
  cfg.conv_widths = {2, 3};
  cfg.n_filters = 2;
  cfg.seq_len = 6;
  cfg.sentiment_dim = 4;
  cfg.sentiment_hidden = 3;
  ModelParams p = ModelParams::init(cfg, static_cast<std::uint64_t>(rng.index(1 << 30)));
  // O(1) parameters; initial scales leave gradients too small to resolve numerically.
  for (auto& view : param_views(p)) {
    for (std::size_t k = 0; k < view.size; ++k) view.data[k] = rng.uniform(-1.0, 1.0);
  }
  p.sentiment.alpha_kg = rng.uniform(0.2, 0.8);

  PreparedSample s;
  s.text = rng.mat(4, 3);
  s.video = rng.mat(5, 3);
  s.face = rng.mat(5, 3);
  s.audio = rng.mat(6, 3);
  s.comment_indices.resize(6);
  for (auto& i : s.comment_indices) i = rng.index(8);
  s.comment_embedding = rng.vec(4);
  s.knowledge = rng.vec(4);
  FocalConfig focal;
  focal.alpha = {0.4, 0.6};
  // Label the less likely class so the focal term is not saturated.
  const Vec probs = predict(s, p, cfg);
  s.label = probs[0] < probs[1] ? 0 : 1;

  ModelParams g = ModelParams::zeros(cfg);
  forward_backward(s, p, cfg, focal, 0.3, &g);
  auto pv = param_views(p);
  auto gv = param_views(g);
  std::vector<GradTarget> t;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    t.push_back({pv[i].name, pv[i].data, pv[i].size,
                 std::vector<double>(gv[i].data, gv[i].data + gv[i].size)});
  }
  check_targets([&] { return forward_backward(s, p, cfg, focal, 0.3, nullptr).loss; }, t, h, rep);
}

const std::map<std::string, InstanceFn>& registry() {
  static const std::map<std::string, InstanceFn> ops{
      {"lift_audio", check_lift},
      {"concat_project", check_concat_project},
      {"fsf_gate", check_fsf_gate},
      {"ssm_encode", check_ssm_encode},
      {"pool_video", check_pool_video},
      {"barycentric_project", check_barycentric},
      {"textcnn_score", check_textcnn},
      {"sentiment_head", check_sentiment_head},
      {"fuse_and_classify", check_fuse_and_classify},
      {"focal_loss", check_focal},
      {"total_mmd_loss", check_total_mmd},
      {"full_model", check_full_model},
  };
  return ops;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / den;
}

void check_targets(const std::function<double()>& objective, std::vector<GradTarget>& targets,
                   double h, GradCheckReport& report) {
  for (auto& t : targets) {
    require(t.analytic.size() == t.size, "grad check: analytic gradient size mismatch for " + t.name);
    for (std::size_t k = 0; k < t.size; ++k) {
      const double orig = t.data[k];
      t.data[k] = orig + h;
      const double up = objective();
      t.data[k] = orig - h;
      const double down = objective();
      t.data[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(t.analytic[k], numeric);
      ++report.entries;
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        report.worst = t.name + "[" + std::to_string(k) + "]";
      }
    }
  }
}

std::vector<std::string> grad_check_ops() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

GradCheckReport grad_check(const std::string& op, int instances, double h, std::uint64_t seed) {
  const auto& ops = registry();
  const auto it = ops.find(op);
  if (it == ops.end()) throw InvalidArgument("grad_check: unregistered op '" + op + "'");
  require(instances >= 1, "grad_check: need at least one instance");
  GradCheckReport report;
  report.op = op;
  Rng rng(seed ^ std::hash<std::string>{}(op));
  for (int i = 0; i < instances; ++i) {
    it->second(rng, h, report);
    ++report.instances;
  }
  report.passed = report.max_rel_error <= kGradCheckTolerance;
  return report;
}

}  // namespace cpcl
