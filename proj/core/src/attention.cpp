#include "eagle/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "eagle/adamw.hpp"
#include "eagle/error.hpp"
#include "eagle/mlp.hpp"

namespace eagle {

void AttentionHead::validate() const {
  if (U.rows() != V.rows() || U.cols() != V.cols() || w.size() != V.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "attention head shapes disagree");
  }
  if (!V.allFinite() || !U.allFinite() || !w.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "attention head has non-finite parameters");
  }
}

namespace {

Eigen::Map<const RowMatrixF> as_matrix(const EmbeddingMatrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.dim())};
}

void check_input(const AttentionHead& head, const EmbeddingMatrix& m) {
  if (m.dim() != head.input_dim()) {
    throw Error(ErrorCode::kDimMismatch, "embedding dim " + std::to_string(m.dim()) +
                                             " vs head input " + std::to_string(head.input_dim()));
  }
}

}  // namespace

std::vector<double> attention_logits(const AttentionHead& head, const EmbeddingMatrix& m) {
  check_input(head, m);
  const auto H = as_matrix(m);
  const Eigen::MatrixXf a = (head.V * H.transpose()).array().tanh();
  const Eigen::MatrixXf g = (1.0f + (-(head.U * H.transpose()).array()).exp()).inverse();
  const Eigen::VectorXf s = (a.array() * g.array()).matrix().transpose() * head.w;
  return {s.data(), s.data() + s.size()};
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

AttentionScores attention_scores(const AttentionHead& head, const EmbeddingMatrix& m) {
  check_input(head, m);
  if (m.empty()) throw Error(ErrorCode::kEmptyMatrix, "cannot score an empty bag");
  const auto logits = attention_logits(head, m);
  return {m.slide_id(), softmax(logits), m.coords()};
}

std::vector<std::size_t> select_top_k(const AttentionScores& scores, std::size_t k) {
  const auto& s = scores.scores;
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const bool have_coords = scores.coords.size() == s.size();
  auto before = [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    if (have_coords) {
      const auto& ca = scores.coords[a];
      const auto& cb = scores.coords[b];
      if (row_major_less(ca, cb)) return true;
      if (row_major_less(cb, ca)) return false;
    }
    return a < b;
  };
  const std::size_t take = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), before);
  idx.resize(take);
  return idx;
}

AttentionHead random_head(std::uint64_t seed, std::size_t hidden, std::size_t input_dim) {
  if (hidden == 0 || input_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "head dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f / std::sqrt(static_cast<float>(input_dim)));
  AttentionHead h;
  const auto L = static_cast<Eigen::Index>(hidden), M = static_cast<Eigen::Index>(input_dim);
  h.V.resize(L, M);
  h.U.resize(L, M);
  h.w.resize(L);
  for (Eigen::Index i = 0; i < h.V.size(); ++i) h.V.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < h.U.size(); ++i) h.U.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < h.w.size(); ++i) h.w[i] = normal(rng);
  return h;
}

namespace {
constexpr char kHeadMagic[8] = {'E', 'A', 'G', 'L', 'A', 'T', 'T', '1'};
}

void save_head(const AttentionHead& head, const std::filesystem::path& path) {
  head.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const auto L = static_cast<std::uint32_t>(head.hidden());
  const auto M = static_cast<std::uint32_t>(head.input_dim());
  out.write(kHeadMagic, sizeof(kHeadMagic));
  out.write(reinterpret_cast<const char*>(&L), sizeof(L));
  out.write(reinterpret_cast<const char*>(&M), sizeof(M));
  out.write(reinterpret_cast<const char*>(head.V.data()), static_cast<std::streamsize>(head.V.size() * 4));
  out.write(reinterpret_cast<const char*>(head.U.data()), static_cast<std::streamsize>(head.U.size() * 4));
  out.write(reinterpret_cast<const char*>(head.w.data()), static_cast<std::streamsize>(head.w.size() * 4));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

AttentionHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kHeadMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an EAGLATT1 file: " + path.string());
  }
  std::uint32_t L = 0, M = 0;
  in.read(reinterpret_cast<char*>(&L), sizeof(L));
  in.read(reinterpret_cast<char*>(&M), sizeof(M));
  if (!in || L == 0 || M == 0) throw Error(ErrorCode::kShapeMismatch, "bad head shape header");
  AttentionHead h;
  h.V.resize(L, M);
  h.U.resize(L, M);
  h.w.resize(L);
  auto read = [&](float* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * 4));
    if (in.gcount() != static_cast<std::streamsize>(n * 4)) {
      throw Error(ErrorCode::kShapeMismatch, "head payload shorter than declared shape");
    }
  };
  read(h.V.data(), static_cast<std::size_t>(h.V.size()));
  read(h.U.data(), static_cast<std::size_t>(h.U.size()));
  read(h.w.data(), static_cast<std::size_t>(h.w.size()));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kShapeMismatch, "trailing bytes after head payload");
  }
  h.validate();
  return h;
}

AttentionHead train_head(std::span<const LabeledBag> bags, const HeadTrainConfig& cfg) {
  if (bags.empty()) throw Error(ErrorCode::kEmptyInput, "no bags");
  return train_head(bags, cfg, random_head(cfg.seed, cfg.hidden, bags.front().embeddings.dim()));
}

AttentionHead train_head(std::span<const LabeledBag> bags, const HeadTrainConfig& cfg,
                         AttentionHead head) {
  head.validate();
  std::set<int> classes;
  for (const auto& b : bags) {
    if (b.label < 0) throw Error(ErrorCode::kInvalidArgument, "labels must be non-negative");
    classes.insert(b.label);
    check_input(head, b.embeddings);
    if (b.embeddings.empty()) throw Error(ErrorCode::kEmptyMatrix, "empty bag " + b.embeddings.slide_id());
  }
  if (bags.size() < 2 || classes.size() < 2) {
    throw Error(ErrorCode::kDegenerateLabels, "head training needs >= 2 bags and >= 2 classes");
  }
  if (cfg.epochs <= 0) return head;

  const int n_classes = *classes.rbegin() + 1;
  std::vector<int> labels;
  for (const auto& b : bags) labels.push_back(b.label);
  std::vector<double> cw(static_cast<std::size_t>(n_classes), 1.0);
  if (cfg.class_weighted) {
    const auto w = class_weights(labels, n_classes);
    for (std::size_t c = 0; c < w.size(); ++c) cw[c] = w[c] > 0 ? w[c] : 1.0;
  }

  const auto M = static_cast<Eigen::Index>(head.input_dim());
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  std::normal_distribution<float> normal(0.0f, 1.0f / std::sqrt(static_cast<float>(M)));
  RowMatrixF Wc(n_classes, M);
  for (Eigen::Index i = 0; i < Wc.size(); ++i) Wc.data()[i] = normal(rng);
  Eigen::VectorXf bc = Eigen::VectorXf::Zero(n_classes);

  // classifier input is centered on the mean bag embedding (absorbed by bc)
  Eigen::VectorXf center = Eigen::VectorXf::Zero(M);
  for (const auto& b : bags) center += as_matrix(b.embeddings).colwise().mean().transpose();
  center /= static_cast<float>(bags.size());

  RowMatrixF gV(head.V.rows(), M), gU(head.U.rows(), M), gWc(n_classes, M);
  Eigen::VectorXf gw(head.w.size()), gbc(n_classes);

  AdamWConfig acfg;
  acfg.weight_decay = cfg.weight_decay;
  AdamW<float> opt(acfg);
  using P = AdamW<float>::Param;
  auto span_of = [](auto& m) { return std::span<float>(m.data(), static_cast<std::size_t>(m.size())); };
  auto cspan_of = [](const auto& m) {
    return std::span<const float>(m.data(), static_cast<std::size_t>(m.size()));
  };
  const std::vector<P> params = {
      {span_of(head.V), cspan_of(gV), true},  {span_of(head.U), cspan_of(gU), true},
      {span_of(head.w), cspan_of(gw), true},  {span_of(Wc), cspan_of(gWc), true},
      {span_of(bc), cspan_of(gbc), false},
  };

  std::vector<std::size_t> order(bags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t bi : order) {
      const auto& bag = bags[bi];
      const auto H = as_matrix(bag.embeddings);  // N x M
      const Eigen::MatrixXf A = (head.V * H.transpose()).array().tanh();  // L x N
      const Eigen::MatrixXf G = (1.0f + (-(head.U * H.transpose()).array()).exp()).inverse();
      const Eigen::MatrixXf Pm = A.cwiseProduct(G);
      Eigen::VectorXf s = Pm.transpose() * head.w;  // N
      s.array() -= s.maxCoeff();
      Eigen::VectorXf a = s.array().exp();
      a /= a.sum();
      const Eigen::VectorXf z = H.transpose() * a - center;  // M
      Eigen::VectorXf out = Wc * z + bc;
      out.array() -= out.maxCoeff();
      Eigen::VectorXf prob = out.array().exp();
      prob /= prob.sum();

      const float weight = static_cast<float>(cw[static_cast<std::size_t>(bag.label)]);
      Eigen::VectorXf d_out = prob;
      d_out[bag.label] -= 1.0f;
      d_out *= weight;
      if (!d_out.allFinite()) throw Error(ErrorCode::kNonFiniteLoss, "attention training diverged");

      gWc = d_out * z.transpose();
      gbc = d_out;
      const Eigen::VectorXf dz = Wc.transpose() * d_out;  // M
      const Eigen::VectorXf da = H * dz;  // N
      const Eigen::VectorXf ds = a.cwiseProduct((da.array() - a.dot(da)).matrix());
      gw = Pm * ds;
      const Eigen::MatrixXf dP = head.w * ds.transpose();  // L x N
      const Eigen::MatrixXf dpreV = dP.cwiseProduct(G).cwiseProduct((1.0f - A.array().square()).matrix());
      const Eigen::MatrixXf dpreU =
          dP.cwiseProduct(A).cwiseProduct(G).cwiseProduct((1.0f - G.array()).matrix());
      gV = dpreV * H;
      gU = dpreU * H;
      opt.step(params, cfg.lr);
    }
  }
  head.validate();
  return head;
}

}  // namespace eagle
