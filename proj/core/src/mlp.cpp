#include "eagle/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eagle/adamw.hpp"
#include "eagle/error.hpp"
#include "eagle/metrics.hpp"

namespace eagle {

MlpModel make_mlp(std::size_t in_dim, std::size_t classes, std::uint64_t seed, std::size_t hidden,
                  double dropout_p) {
  if (in_dim == 0 || hidden == 0 || classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "mlp needs in_dim, hidden >= 1 and classes >= 2");
  }
  std::mt19937_64 rng(seed);
  const auto I = static_cast<Eigen::Index>(in_dim), H = static_cast<Eigen::Index>(hidden),
             C = static_cast<Eigen::Index>(classes);
  MlpModel m{RowMatrix<float>(I, H), Vector<float>(H), RowMatrix<float>(H, C), Vector<float>(C),
             dropout_p};
  auto fill = [&](auto& t, std::size_t fan_in) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    std::uniform_real_distribution<float> u(-bound, bound);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  };
  fill(m.W1, in_dim);
  fill(m.b1, in_dim);
  fill(m.W2, hidden);
  fill(m.b2, hidden);
  return m;
}

namespace {

template <typename Scalar>
void check_width(const BasicMlp<Scalar>& model, const RowMatrix<Scalar>& x) {
  if (static_cast<std::size_t>(x.cols()) != model.in_dim()) {
    throw Error(ErrorCode::kDimMismatch, "input width " + std::to_string(x.cols()) +
                                             " vs model in_dim " + std::to_string(model.in_dim()));
  }
}

template <typename Scalar>
RowMatrix<Scalar> sigmoid(const RowMatrix<Scalar>& z) {
  return (Scalar(1) + (-z.array()).exp()).inverse().matrix();
}

template <typename Scalar>
RowMatrix<Scalar> forward_impl(const BasicMlp<Scalar>& model, const RowMatrix<Scalar>& x) {
  check_width(model, x);
  RowMatrix<Scalar> pre = x * model.W1;
  pre.rowwise() += model.b1.transpose();
  const RowMatrix<Scalar> h = pre.cwiseProduct(sigmoid(pre));
  RowMatrix<Scalar> logits = h * model.W2;
  logits.rowwise() += model.b2.transpose();
  return logits;
}

template <typename Scalar>
RowMatrix<Scalar> row_softmax(RowMatrix<Scalar> z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z.row(i).array() -= z.row(i).maxCoeff();
    z.row(i) = z.row(i).array().exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

}  // namespace

RowMatrix<float> forward(const MlpModel& model, const RowMatrix<float>& x) {
  return forward_impl(model, x);
}
RowMatrix<double> forward(const BasicMlp<double>& model, const RowMatrix<double>& x) {
  return forward_impl(model, x);
}

RowMatrix<float> predict_proba(const MlpModel& model, const RowMatrix<float>& x) {
  return row_softmax(forward_impl(model, x));
}

template <typename Scalar>
Scalar loss_and_gradients(const BasicMlp<Scalar>& model, const RowMatrix<Scalar>& x,
                          std::span<const int> labels, std::span<const double> class_weight,
                          const RowMatrix<Scalar>* hidden_mask, MlpGradients<Scalar>* grads) {
  check_width(model, x);
  const auto n = x.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch, "labels do not match batch size");
  }
  RowMatrix<Scalar> pre = x * model.W1;
  pre.rowwise() += model.b1.transpose();
  const RowMatrix<Scalar> sig = sigmoid(pre);
  RowMatrix<Scalar> h = pre.cwiseProduct(sig);
  if (hidden_mask) h = h.cwiseProduct(*hidden_mask);
  RowMatrix<Scalar> logits = h * model.W2;
  logits.rowwise() += model.b2.transpose();
  const RowMatrix<Scalar> prob = row_softmax(logits);

  Scalar weight_sum = 0;
  Scalar loss = 0;
  Vector<Scalar> w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= prob.cols()) throw Error(ErrorCode::kInvalidArgument, "label out of range");
    w[i] = class_weight.empty() ? Scalar(1) : static_cast<Scalar>(class_weight[static_cast<std::size_t>(y)]);
    weight_sum += w[i];
    // log-softmax computed from logits for accuracy
    const Scalar mx = logits.row(i).maxCoeff();
    const Scalar lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += w[i] * (lse - logits(i, y));
  }
  if (weight_sum <= 0) throw Error(ErrorCode::kDegenerateLabels, "zero total sample weight");
  loss /= weight_sum;

  if (grads) {
    RowMatrix<Scalar> d_logits = prob;
    for (Eigen::Index i = 0; i < n; ++i) {
      d_logits(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
      d_logits.row(i) *= w[i] / weight_sum;
    }
    grads->W2 = h.transpose() * d_logits;
    grads->b2 = d_logits.colwise().sum().transpose();
    RowMatrix<Scalar> dh = d_logits * model.W2.transpose();
    if (hidden_mask) dh = dh.cwiseProduct(*hidden_mask);
    // d SiLU / d pre = sig * (1 + pre * (1 - sig))
    const RowMatrix<Scalar> dsilu =
        (sig.array() * (Scalar(1) + pre.array() * (Scalar(1) - sig.array()))).matrix();
    const RowMatrix<Scalar> dpre = dh.cwiseProduct(dsilu);
    grads->W1 = x.transpose() * dpre;
    grads->b1 = dpre.colwise().sum().transpose();
  }
  return loss;
}

template float loss_and_gradients<float>(const BasicMlp<float>&, const RowMatrix<float>&,
                                         std::span<const int>, std::span<const double>,
                                         const RowMatrix<float>*, MlpGradients<float>*);
template double loss_and_gradients<double>(const BasicMlp<double>&, const RowMatrix<double>&,
                                           std::span<const int>, std::span<const double>,
                                           const RowMatrix<double>*, MlpGradients<double>*);

std::vector<double> class_weights(std::span<const int> labels, int n_classes) {
  if (labels.empty()) throw Error(ErrorCode::kEmptyLabels, "no labels");
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw Error(ErrorCode::kInvalidArgument, "labels must be non-negative");
    max_label = std::max(max_label, y);
  }
  const int C = std::max(n_classes, max_label + 1);
  std::vector<std::size_t> counts(static_cast<std::size_t>(C), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  std::vector<double> w(static_cast<std::size_t>(C), 0.0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) {
      w[c] = static_cast<double>(labels.size()) / (static_cast<double>(present) * counts[c]);
    }
  }
  return w;
}

double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  const double start = cfg.lr_max / cfg.div;
  const double floor = cfg.lr_max / (cfg.div * cfg.final_div);
  if (total_steps <= 1) return start;
  step = std::min(step, total_steps - 1);
  const auto warm = static_cast<std::size_t>(std::floor(cfg.warmup_frac * static_cast<double>(total_steps)));
  auto cos_anneal = [](double from, double to, double pct) {
    return to + (from - to) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
  };
  if (step < warm) {
    return cos_anneal(start, cfg.lr_max, static_cast<double>(step) / static_cast<double>(warm));
  }
  const std::size_t span = total_steps - 1 - warm;
  if (span == 0) return cfg.lr_max;
  return cos_anneal(cfg.lr_max, floor, static_cast<double>(step - warm) / static_cast<double>(span));
}

namespace {

double validation_auroc(const RowMatrix<float>& prob, const std::vector<int>& y) {
  if (prob.cols() == 2) {
    std::vector<double> s(static_cast<std::size_t>(prob.rows()));
    for (Eigen::Index i = 0; i < prob.rows(); ++i) s[static_cast<std::size_t>(i)] = prob(i, 1);
    return auroc(s, y);
  }
  return macro_ovr_auroc(prob.cast<double>(), y);
}

RowMatrix<float> gather_rows(const RowMatrix<float>& x, std::span<const std::size_t> idx) {
  RowMatrix<float> out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

TrainResult train(MlpModel model, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg, const ValScorer& scorer) {
  const std::size_t n = train_set.y.size();
  if (n == 0 || static_cast<std::size_t>(train_set.x.rows()) != n) {
    throw Error(ErrorCode::kEmptyInput, "training split is empty or misaligned");
  }
  if (val_set.y.empty() || static_cast<std::size_t>(val_set.x.rows()) != val_set.y.size()) {
    throw Error(ErrorCode::kEmptyInput, "validation split is empty or misaligned");
  }
  if (cfg.batch == 0 || cfg.epochs < 0 || cfg.patience <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch and patience must be positive");
  }
  if (std::set<int>(train_set.y.begin(), train_set.y.end()).size() < 2) {
    throw Error(ErrorCode::kDegenerateLabels, "training split has a single class");
  }
  model.dropout_p = cfg.dropout_p;
  const std::vector<double> cw =
      cfg.class_weighted ? class_weights(train_set.y, static_cast<int>(model.classes()))
                         : std::vector<double>(model.classes(), 1.0);
  const bool val_two_class = std::set<int>(val_set.y.begin(), val_set.y.end()).size() >= 2;

  AdamWConfig acfg;
  acfg.weight_decay = cfg.weight_decay;
  AdamW<float> opt(acfg);
  MlpGradients<float> g;
  g.W1.resizeLike(model.W1);
  g.b1.resizeLike(model.b1);
  g.W2.resizeLike(model.W2);
  g.b2.resizeLike(model.b2);
  auto sp = [](auto& t) { return std::span<float>(t.data(), static_cast<std::size_t>(t.size())); };
  auto csp = [](const auto& t) { return std::span<const float>(t.data(), static_cast<std::size_t>(t.size())); };
  const std::vector<AdamW<float>::Param> params = {
      {sp(model.W1), csp(g.W1), true}, {sp(model.b1), csp(g.b1), true},
      {sp(model.W2), csp(g.W2), true}, {sp(model.b2), csp(g.b2), true}};

  const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(std::max(cfg.epochs, 0));
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution keep(1.0 - cfg.dropout_p);
  const float keep_scale = cfg.dropout_p < 1.0 ? static_cast<float>(1.0 / (1.0 - cfg.dropout_p)) : 0.0f;

  TrainResult result{model, {}};
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    double lr = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch, ++step) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch, n - start));
      const RowMatrix<float> xb = gather_rows(train_set.x, idx);
      std::vector<int> yb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = train_set.y[idx[i]];
      RowMatrix<float> mask(xb.rows(), static_cast<Eigen::Index>(model.hidden()));
      for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? keep_scale : 0.0f;
      const float loss = loss_and_gradients(model, xb, yb, cw, cfg.dropout_p > 0 ? &mask : nullptr, &g);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "loss " << loss << " at epoch " << epoch << ", step " << step << ", lr " << lr;
        throw Error(ErrorCode::kNonFiniteLoss, os.str());
      }
      loss_sum += loss * static_cast<double>(idx.size());
      lr = one_cycle_lr(step, total_steps, cfg);
      opt.step(params, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.lr = lr;
    rec.val_loss = loss_and_gradients<float>(model, val_set.x, val_set.y, cw, nullptr, nullptr);
    rec.val_auroc = val_two_class ? validation_auroc(predict_proba(model, val_set.x), val_set.y)
                                  : std::numeric_limits<double>::quiet_NaN();
    if (scorer) {
      rec.monitored = scorer(model, epoch);
    } else if (cfg.monitor == TrainConfig::Monitor::kAuroc && val_two_class) {
      rec.monitored = rec.val_auroc;
    } else {
      rec.monitored = -rec.val_loss;
    }
    result.history.epochs.push_back(rec);

    if (rec.monitored > best) {
      best = rec.monitored;
      since_best = 0;
      result.model = model;
      result.history.best_epoch = epoch;
    } else if (++since_best >= cfg.patience) {
      result.history.stopped_early = true;
      break;
    }
  }
  return result;
}

double grad_check(const MlpModel& model, const RowMatrix<float>& x, std::span<const int> labels,
                  std::uint64_t seed, std::size_t max_coords) {
  BasicMlp<double> m = model.cast<double>();
  const RowMatrix<double> xd = x.cast<double>();
  const std::vector<double> cw = class_weights(labels, static_cast<int>(model.classes()));
  MlpGradients<double> g;
  loss_and_gradients<double>(m, xd, labels, cw, nullptr, &g);

  constexpr double h = 1e-4;
  std::mt19937_64 rng(seed);
  double worst = 0;
  auto probe = [&](auto& tensor, const auto& grad) {
    const auto size = static_cast<std::size_t>(tensor.size());
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (size > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }
    for (std::size_t c : coords) {
      double& p = tensor.data()[c];
      const double saved = p;
      p = saved + h;
      const double up = loss_and_gradients<double>(m, xd, labels, cw, nullptr, nullptr);
      p = saved - h;
      const double down = loss_and_gradients<double>(m, xd, labels, cw, nullptr, nullptr);
      p = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad.data()[c];
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-3});
      worst = std::max(worst, std::fabs(numeric - analytic) / denom);
    }
  };
  probe(m.W1, g.W1);
  probe(m.b1, g.b1);
  probe(m.W2, g.W2);
  probe(m.b2, g.b2);
  return worst;
}

namespace {
constexpr char kMlpMagic[8] = {'E', 'A', 'G', 'L', 'M', 'L', 'P', '1'};
}

void save_mlp(const MlpModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const std::uint32_t shape[3] = {static_cast<std::uint32_t>(model.in_dim()),
                                  static_cast<std::uint32_t>(model.hidden()),
                                  static_cast<std::uint32_t>(model.classes())};
  const float p = static_cast<float>(model.dropout_p);
  out.write(kMlpMagic, sizeof(kMlpMagic));
  out.write(reinterpret_cast<const char*>(shape), sizeof(shape));
  out.write(reinterpret_cast<const char*>(&p), sizeof(p));
  auto put = [&](const auto& t) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
  };
  put(model.W1);
  put(model.b1);
  put(model.W2);
  put(model.b2);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

MlpModel load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMlpMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an EAGLMLP1 file: " + path.string());
  }
  std::uint32_t shape[3] = {};
  float p = 0;
  in.read(reinterpret_cast<char*>(shape), sizeof(shape));
  in.read(reinterpret_cast<char*>(&p), sizeof(p));
  if (!in || shape[0] == 0 || shape[1] == 0 || shape[2] < 2) {
    throw Error(ErrorCode::kShapeMismatch, "bad mlp shape header");
  }
  MlpModel m{RowMatrix<float>(shape[0], shape[1]), Vector<float>(shape[1]),
             RowMatrix<float>(shape[1], shape[2]), Vector<float>(shape[2]), p};
  auto get = [&](auto& t) {
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(t.size() * 4)) {
      throw Error(ErrorCode::kTruncatedFile, "mlp payload truncated");
    }
  };
  get(m.W1);
  get(m.b1);
  get(m.W2);
  get(m.b2);
  return m;
}

std::string history_json(const TrainHistory& history) {
  nlohmann::json j;
  j["best_epoch"] = history.best_epoch;
  j["stopped_early"] = history.stopped_early;
  auto& epochs = j["epochs"] = nlohmann::json::array();
  for (const auto& e : history.epochs) {
    nlohmann::json r = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.lr}};
    r["val_auroc"] = std::isfinite(e.val_auroc) ? nlohmann::json(e.val_auroc) : nlohmann::json(nullptr);
    epochs.push_back(r);
  }
  return j.dump(2);
}

}  // namespace eagle
