// Copyright 2026 The Occgrounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ago/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "ago/errors.hpp"

namespace ago {

namespace {

void check_width(const MatRMd& sem, int n_cls, int n_noise) {
  if (sem.cols() != n_cls + n_noise + 1) {
    throw ConfigError("semantic score width " + std::to_string(sem.cols()) +
                      " does not match n_cls + n_noise + 1 = " +
                      std::to_string(n_cls + n_noise + 1));
  }
}

// Target label -> score column. Free (label == n_cls) maps to the last
// column; labels in (n_cls, 65535) would address noise columns and are a
// contract violation.
int target_column(std::uint16_t label, int n_cls, int n_noise) {
  if (label < n_cls) return label;
  if (label == n_cls) return n_cls + n_noise;
  throw ContractError("target label " + std::to_string(label) +
                      " addresses a noise column (n_cls = " + std::to_string(n_cls) + ")");
}

// Scalar std::exp underflows to an exact 0.0 for saturated logit gaps,
// which Eigen's clamped packet exp does not.
void stable_softmax_row(const MatRMd& logits, Eigen::Index i, double* out) {
  const double m = logits.row(i).maxCoeff();
  double denom = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    out[j] = std::exp(logits(i, j) - m);
    denom += out[j];
  }
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out[j] /= denom;
}

// Lovász extension gradient of the Jaccard loss for a descending-sorted
// binary ground-truth vector.
Eigen::VectorXd lovasz_grad(const std::vector<char>& gt_sorted) {
  const int n = static_cast<int>(gt_sorted.size());
  Eigen::VectorXd g(n);
  double gts = 0;
  for (char v : gt_sorted) gts += v;
  double inter = gts;
  double uni = gts;
  double prev = 0.0;
  for (int i = 0; i < n; ++i) {
    inter -= gt_sorted[i];
    uni += 1 - gt_sorted[i];
    const double jac = (uni > 0.0) ? 1.0 - inter / uni : 0.0;
    g[i] = jac - prev;
    prev = jac;
  }
  return g;
}

}  // namespace

int TokenGroups::total_rows() const {
  int n = 0;
  for (const auto& groups : class_groups) {
    for (const auto& g : groups) n += static_cast<int>(g.size());
  }
  return n + n_noise() + 1;
}

void TokenGroups::validate(int n_rows) const {
  if (free_row < 0) throw ConfigError("token groups must declare a free row");
  std::vector<char> seen(n_rows, 0);
  auto claim = [&](int row, const std::string& what) {
    if (row < 0 || row >= n_rows) {
      throw ConfigError(what + " row " + std::to_string(row) + " outside [0, " +
                        std::to_string(n_rows) + ")");
    }
    if (seen[row]) {
      throw ConfigError(what + " row " + std::to_string(row) + " claimed twice");
    }
    seen[row] = 1;
  };
  for (std::size_t k = 0; k < class_groups.size(); ++k) {
    if (class_groups[k].empty()) {
      throw ConfigError("class " + std::to_string(k) + " has no token groups");
    }
    for (const auto& g : class_groups[k]) {
      if (g.empty()) {
        throw ConfigError("class " + std::to_string(k) + " has an empty token group");
      }
      for (int row : g) claim(row, "class token");
    }
  }
  for (int row : noise_rows) claim(row, "noise token");
  claim(free_row, "free");
  for (int r = 0; r < n_rows; ++r) {
    if (!seen[r]) {
      throw ConfigError("token row " + std::to_string(r) + " not covered by any group");
    }
  }
}

TokenGroups make_token_groups(const LabelSpace& space, int n_noise) {
  TokenGroups groups;
  int row = 0;
  groups.class_groups.resize(space.classes.size());
  for (std::size_t k = 0; k < space.classes.size(); ++k) {
    for (std::size_t s = 0; s < space.subclass_prompts[k].size(); ++s) {
      groups.class_groups[k].push_back({row++});
    }
  }
  for (int i = 0; i < n_noise; ++i) groups.noise_rows.push_back(row++);
  groups.free_row = row++;
  return groups;
}

MatRMd similarity_scores(const MatRMd& voxels, const MatRMd& categories) {
  if (voxels.cols() != categories.cols()) {
    throw ConfigError("voxel embedding dim " + std::to_string(voxels.cols()) +
                      " does not match category embedding dim " +
                      std::to_string(categories.cols()));
  }
  return voxels * categories.transpose();
}

MatRMd semantic_logits(const MatRMd& scores, const TokenGroups& groups, LogitMode mode) {
  groups.validate(static_cast<int>(scores.cols()));
  const int n_cls = groups.n_classes();
  const int n_noise = groups.n_noise();
  MatRMd sem(scores.rows(), groups.sem_width());
  for (int k = 0; k < n_cls; ++k) {
    if (mode == LogitMode::kTokenMean) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(scores.rows());
      int count = 0;
      for (const auto& g : groups.class_groups[k]) {
        for (int row : g) {
          acc += scores.col(row);
          ++count;
        }
      }
      sem.col(k) = acc / count;
    } else {
      Eigen::VectorXd best;
      bool first = true;
      for (const auto& g : groups.class_groups[k]) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(scores.rows());
        for (int row : g) acc += scores.col(row);
        acc /= static_cast<double>(g.size());
        if (first) {
          best = acc;
          first = false;
        } else {
          best = best.cwiseMax(acc);
        }
      }
      sem.col(k) = best;
    }
  }
  for (int i = 0; i < n_noise; ++i) {
    sem.col(n_cls + i) = scores.col(groups.noise_rows[i]);
  }
  sem.col(n_cls + n_noise) = scores.col(groups.free_row);
  return sem;
}

MatRMd semantic_logits_backward(const MatRMd& scores, const TokenGroups& groups, LogitMode mode,
                                const MatRMd& grad_sem) {
  const int n_cls = groups.n_classes();
  const int n_noise = groups.n_noise();
  if (grad_sem.rows() != scores.rows() || grad_sem.cols() != groups.sem_width()) {
    throw ConfigError("semantic logit gradient has the wrong shape");
  }
  MatRMd grad = MatRMd::Zero(scores.rows(), scores.cols());
  for (int k = 0; k < n_cls; ++k) {
    if (mode == LogitMode::kTokenMean) {
      int count = 0;
      for (const auto& g : groups.class_groups[k]) count += static_cast<int>(g.size());
      for (const auto& g : groups.class_groups[k]) {
        for (int row : g) grad.col(row) += grad_sem.col(k) / count;
      }
    } else {
      // Recompute per-group means and route through the first argmax group.
      const auto& cgs = groups.class_groups[k];
      MatRMd means(scores.rows(), static_cast<Eigen::Index>(cgs.size()));
      for (std::size_t gi = 0; gi < cgs.size(); ++gi) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(scores.rows());
        for (int row : cgs[gi]) acc += scores.col(row);
        means.col(static_cast<Eigen::Index>(gi)) = acc / static_cast<double>(cgs[gi].size());
      }
      for (Eigen::Index v = 0; v < scores.rows(); ++v) {
        Eigen::Index best = 0;
        means.row(v).maxCoeff(&best);
        const auto& g = cgs[static_cast<std::size_t>(best)];
        for (int row : g) {
          grad(v, row) += grad_sem(v, k) / static_cast<double>(g.size());
        }
      }
    }
  }
  for (int i = 0; i < n_noise; ++i) {
    grad.col(groups.noise_rows[i]) += grad_sem.col(n_cls + i);
  }
  grad.col(groups.free_row) += grad_sem.col(n_cls + n_noise);
  return grad;
}

MatRMd binary_scores(const MatRMd& sem, int n_cls, int n_noise) {
  check_width(sem, n_cls, n_noise);
  MatRMd out(sem.rows(), 2);
  out.col(0) = sem.leftCols(n_cls).rowwise().maxCoeff();
  out.col(1) = sem.col(n_cls + n_noise);
  return out;
}

LossGrad ce_loss(const MatRMd& sem, const std::vector<std::uint16_t>& targets, int n_cls,
                 int n_noise) {
  check_width(sem, n_cls, n_noise);
  if (static_cast<Eigen::Index>(targets.size()) != sem.rows()) {
    throw ConfigError("target count does not match score rows");
  }
  LossGrad out;
  out.grad = MatRMd::Zero(sem.rows(), sem.cols());
  Eigen::Index active = 0;
  for (std::uint16_t t : targets) {
    if (t != kIgnoreId) ++active;
  }
  if (active == 0) return out;

  double loss = 0.0;
  std::vector<double> probs(static_cast<std::size_t>(sem.cols()));
  for (Eigen::Index i = 0; i < sem.rows(); ++i) {
    if (targets[i] == kIgnoreId) continue;
    const int col = target_column(targets[i], n_cls, n_noise);
    const double m = sem.row(i).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index j = 0; j < sem.cols(); ++j) {
      probs[static_cast<std::size_t>(j)] = std::exp(sem(i, j) - m);
      denom += probs[static_cast<std::size_t>(j)];
    }
    loss += -(sem(i, col) - m - std::log(denom));
    for (Eigen::Index j = 0; j < sem.cols(); ++j) {
      out.grad(i, j) = probs[static_cast<std::size_t>(j)] / denom / static_cast<double>(active);
    }
    out.grad(i, col) -= 1.0 / static_cast<double>(active);
  }
  out.loss = loss / static_cast<double>(active);
  return out;
}

LossGrad lovasz_softmax_loss(const MatRMd& sem, const std::vector<std::uint16_t>& targets,
                             int n_cls, int n_noise) {
  check_width(sem, n_cls, n_noise);
  if (static_cast<Eigen::Index>(targets.size()) != sem.rows()) {
    throw ConfigError("target count does not match score rows");
  }
  LossGrad out;
  out.grad = MatRMd::Zero(sem.rows(), sem.cols());

  std::vector<Eigen::Index> rows;
  std::set<int> present;
  for (Eigen::Index i = 0; i < sem.rows(); ++i) {
    if (targets[i] == kIgnoreId) continue;
    rows.push_back(i);
    present.insert(target_column(targets[i], n_cls, n_noise));
  }
  if (rows.empty()) return out;
  const int n = static_cast<int>(rows.size());
  const double n_present = static_cast<double>(present.size());

  MatRMd probs(n, sem.cols());
  for (int r = 0; r < n; ++r) {
    stable_softmax_row(sem, rows[r], probs.row(r).data());
  }

  MatRMd dprobs = MatRMd::Zero(n, sem.cols());
  double loss = 0.0;
  std::vector<int> order(n);
  std::vector<char> fg(n), gt_sorted(n);
  Eigen::VectorXd errors(n);
  for (int c : present) {
    for (int r = 0; r < n; ++r) {
      fg[r] = (target_column(targets[rows[r]], n_cls, n_noise) == c) ? 1 : 0;
      errors[r] = fg[r] ? 1.0 - probs(r, c) : probs(r, c);
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return errors[a] > errors[b]; });
    for (int r = 0; r < n; ++r) gt_sorted[r] = fg[order[r]];
    const Eigen::VectorXd g = lovasz_grad(gt_sorted);
    for (int r = 0; r < n; ++r) {
      loss += errors[order[r]] * g[r];
      // d errors / d p(c) is -1 on foreground, +1 on background.
      dprobs(order[r], c) += (fg[order[r]] ? -g[r] : g[r]) / n_present;
    }
  }
  out.loss = loss / n_present;

  // Back through the softmax per row: dS_j = p_j * (dp_j - sum_c dp_c p_c).
  for (int r = 0; r < n; ++r) {
    const double inner = dprobs.row(r).dot(probs.row(r));
    out.grad.row(rows[r]) =
        (probs.row(r).array() * (dprobs.row(r).array() - inner)).matrix();
  }
  return out;
}

LossGrad occupancy_loss(const MatRMd& sem, const std::vector<std::uint16_t>& targets, int n_cls,
                        int n_noise) {
  check_width(sem, n_cls, n_noise);
  if (static_cast<Eigen::Index>(targets.size()) != sem.rows()) {
    throw ConfigError("target count does not match score rows");
  }
  const int free_col = n_cls + n_noise;
  LossGrad out;
  out.grad = MatRMd::Zero(sem.rows(), sem.cols());
  Eigen::Index active = 0;
  for (std::uint16_t t : targets) {
    if (t != kIgnoreId) ++active;
  }
  if (active == 0) return out;

  double loss = 0.0;
  for (Eigen::Index i = 0; i < sem.rows(); ++i) {
    if (targets[i] == kIgnoreId) continue;
    target_column(targets[i], n_cls, n_noise);  // reject noise targets
    const bool occupied = targets[i] != n_cls;
    Eigen::Index argmax = 0;
    const double occ_score = sem.row(i).head(n_cls).maxCoeff(&argmax);
    const double free_score = sem(i, free_col);
    // Column 0 is occupied, column 1 is free; target column per O_binary.
    const double m = std::max(occ_score, free_score);
    const double e0 = std::exp(occ_score - m);
    const double e1 = std::exp(free_score - m);
    const double denom = e0 + e1;
    const double target_score = occupied ? occ_score : free_score;
    loss += -(target_score - m - std::log(denom));
    const double g0 = (e0 / denom - (occupied ? 1.0 : 0.0)) / static_cast<double>(active);
    const double g1 = (e1 / denom - (occupied ? 0.0 : 1.0)) / static_cast<double>(active);
    out.grad(i, argmax) += g0;
    out.grad(i, free_col) += g1;
  }
  out.loss = loss / static_cast<double>(active);
  return out;
}

AdapterWeights AdapterWeights::zeros(int dim, int hidden) {
  AdapterWeights w;
  w.w1 = MatRMd::Zero(dim, hidden);
  w.b1 = Eigen::VectorXd::Zero(hidden);
  w.w2 = MatRMd::Zero(hidden, dim);
  w.b2 = Eigen::VectorXd::Zero(dim);
  return w;
}

AdapterWeights AdapterWeights::seeded(int dim, int hidden, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  AdapterWeights w = zeros(dim, hidden);
  for (Eigen::Index i = 0; i < w.w1.size(); ++i) w.w1.data()[i] = dist(rng);
  for (Eigen::Index i = 0; i < w.b1.size(); ++i) w.b1[i] = dist(rng);
  for (Eigen::Index i = 0; i < w.w2.size(); ++i) w.w2.data()[i] = dist(rng);
  for (Eigen::Index i = 0; i < w.b2.size(); ++i) w.b2[i] = dist(rng);
  return w;
}

void AdapterWeights::validate() const {
  if (w1.rows() == 0 || w1.cols() == 0 || w2.rows() != w1.cols() || w2.cols() != w1.rows() ||
      b1.size() != w1.cols() || b2.size() != w2.cols()) {
    throw ConfigError("adapter weight shapes are inconsistent");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
    throw ConfigError("adapter weights contain non-finite values");
  }
}

double softplus(double t) {
  if (t > 30.0) return t;  // exp would overflow the useful range
  return std::log1p(std::exp(t));
}

MatRMd adapter_forward(const AdapterWeights& w, const MatRMd& x) {
  if (x.cols() != w.w1.rows()) {
    throw ConfigError("adapter input dim " + std::to_string(x.cols()) +
                      " does not match weight dim " + std::to_string(w.w1.rows()));
  }
  MatRMd h = x * w.w1;
  h.rowwise() += w.b1.transpose();
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = softplus(h.data()[i]);
  MatRMd y = h * w.w2;
  y.rowwise() += w.b2.transpose();
  return y;
}

AdapterGrads adapter_backward(const AdapterWeights& w, const MatRMd& x, const MatRMd& grad_out) {
  if (x.cols() != w.w1.rows() || grad_out.rows() != x.rows() || grad_out.cols() != w.w2.cols()) {
    throw ConfigError("adapter backward shapes are inconsistent");
  }
  MatRMd pre = x * w.w1;
  pre.rowwise() += w.b1.transpose();
  MatRMd h = pre;
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = softplus(h.data()[i]);

  AdapterGrads g;
  g.w2 = h.transpose() * grad_out;
  g.b2 = grad_out.colwise().sum().transpose();
  MatRMd dh = grad_out * w.w2.transpose();
  // softplus'(t) = sigmoid(t)
  for (Eigen::Index i = 0; i < dh.size(); ++i) {
    const double t = pre.data()[i];
    const double sig = (t > 0) ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    dh.data()[i] *= sig;
  }
  g.w1 = x.transpose() * dh;
  g.b1 = dh.colwise().sum().transpose();
  g.x = dh * w.w1.transpose();
  return g;
}

AlignmentResult alignment_loss(const MatRMd& adapted, const MatRMd& image,
                               const std::vector<std::uint8_t>& visible) {
  if (adapted.rows() != image.rows() || adapted.cols() != image.cols()) {
    throw ConfigError("adapted and image embeddings differ in shape");
  }
  if (static_cast<Eigen::Index>(visible.size()) != adapted.rows()) {
    throw ConfigError("visibility mask does not match embedding rows");
  }
  AlignmentResult out;
  out.grad = MatRMd::Zero(adapted.rows(), adapted.cols());

  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < adapted.rows(); ++i) {
    if (!visible[i]) continue;
    const double na = adapted.row(i).norm();
    const double nb = image.row(i).norm();
    if (na == 0.0 || nb == 0.0) {
      ++out.excluded;
      continue;
    }
    rows.push_back(i);
  }
  if (rows.empty()) {
    throw ContractError("alignment loss has no usable visible voxels");
  }
  out.used = static_cast<std::int64_t>(rows.size());
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (Eigen::Index i : rows) {
    const double na = adapted.row(i).norm();
    const double nb = image.row(i).norm();
    const double dot = adapted.row(i).dot(image.row(i));
    const double cosv = dot / (na * nb);
    loss += 1.0 - cosv;
    // d(1 - cos)/da = -(b / (|a||b|)) + cos * a / |a|^2
    out.grad.row(i) =
        inv_n * (-(image.row(i) / (na * nb)) + (cosv / (na * na)) * adapted.row(i));
  }
  out.loss = loss * inv_n;
  return out;
}

double total_loss(const LossBreakdown& parts, const LossWeights& weights) {
  return weights.grounding * (parts.ce + parts.lovasz) + weights.occ * parts.occ +
         weights.align * parts.align;
}

}  // namespace ago
