#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ripen/errors.hpp"
#include "ripen/pipeline.hpp"

namespace ripen {

struct SvmParams {
  double C = 1.0;
  std::optional<double> gamma;  // defaults to 1 / number of features
  double tolerance = 1e-3;      // maximal KKT violation at convergence
  std::int64_t max_iter_factor = 100000;
  bool record_objective = false;
};

struct TrainInfo {
  std::int64_t iterations = 0;
  double final_violation = 0.0;
  double dual_objective = 0.0;
  std::vector<double> objective_trace;  // filled when requested
};

// Binary soft-margin SVM with RBF kernel K(u, v) = exp(-gamma |u - v|^2) on
// z-scored inputs. decision(x) = sum_i coef_i K(sv_i, z(x)) + bias, coef_i = alpha_i y_i.
struct SvmModel {
  std::vector<int> feature_ids;
  std::vector<double> mean;
  std::vector<double> scale;
  double gamma = 1.0;
  double C = 1.0;
  double bias = 0.0;
  std::vector<std::vector<double>> support_vectors;  // standardized
  std::vector<double> coef;
  TrainInfo info;

  // Provenance, serialized with the model.
  std::optional<int> fold;
  double threshold = 0.0;
  std::string source;

  std::size_t dimension() const { return feature_ids.size(); }
};

namespace detail {

inline double rbf(std::span<const double> u, std::span<const double> v, double gamma) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - v[k];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

// Gram matrix with signs folded in: Q_ij = y_i y_j K_ij. Cached in full for
// moderate n, otherwise rows are recomputed on demand.
class SignedKernel {
 public:
  static constexpr std::size_t kFullCacheLimit = 6000;

  SignedKernel(const std::vector<std::vector<double>>& z, std::span<const int> y, double gamma)
      : z_(z), y_(y), gamma_(gamma), n_(z.size()) {
    diag_.assign(n_, 1.0);
    if (n_ <= kFullCacheLimit) {
      full_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i) {
        full_[i * n_ + i] = 1.0;
        for (std::size_t j = i + 1; j < n_; ++j) {
          const double q = y_[i] * y_[j] * rbf(z_[i], z_[j], gamma_);
          full_[i * n_ + j] = q;
          full_[j * n_ + i] = q;
        }
      }
    } else {
      buf_[0].resize(n_);
      buf_[1].resize(n_);
    }
  }

  std::span<const double> row(std::size_t i, int slot) {
    if (!full_.empty()) return {full_.data() + i * n_, n_};
    auto& b = buf_[slot];
    for (std::size_t j = 0; j < n_; ++j) b[j] = y_[i] * y_[j] * rbf(z_[i], z_[j], gamma_);
    return b;
  }

  double diag(std::size_t i) const { return diag_[i]; }

 private:
  const std::vector<std::vector<double>>& z_;
  std::span<const int> y_;
  double gamma_;
  std::size_t n_;
  std::vector<double> full_;
  std::vector<double> diag_;
  std::vector<double> buf_[2];
};

}  // namespace detail

// Dual objective sum(alpha) - 1/2 alpha' Q alpha for labels in {-1, +1}.
inline double dual_objective(std::span<const double> alpha, std::span<const int> y,
                             const std::vector<std::vector<double>>& z, double gamma) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    lin += alpha[i];
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < alpha.size(); ++j)
      if (alpha[j] != 0.0) quad += alpha[i] * alpha[j] * y[i] * y[j] * detail::rbf(z[i], z[j], gamma);
  }
  return lin - 0.5 * quad;
}

struct ZScore {
  std::vector<double> mean, scale;

  static ZScore fit(std::span<const std::vector<double>> x) {
    const std::size_t d = x.front().size();
    ZScore s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    for (const auto& row : x)
      for (std::size_t k = 0; k < d; ++k) s.mean[k] += row[k];
    for (auto& m : s.mean) m /= static_cast<double>(x.size());
    for (const auto& row : x)
      for (std::size_t k = 0; k < d; ++k) s.scale[k] += (row[k] - s.mean[k]) * (row[k] - s.mean[k]);
    for (auto& v : s.scale) {
      v = std::sqrt(v / static_cast<double>(x.size()));
      if (!(v > 0.0)) v = 1.0;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> z(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) z[k] = (x[k] - mean[k]) / scale[k];
    return z;
  }
};

// SMO with maximal-violating-pair working-set selection. Labels are 0/1.
inline SvmModel train_svm(std::span<const std::vector<double>> x, std::span<const int> labels,
                          std::vector<int> feature_ids, const SvmParams& params = {}) {
  const std::size_t n = x.size();
  if (n != labels.size()) throw DataError("feature and label counts differ");
  if (n == 0) throw DataError("empty training set");
  const std::size_t d = x.front().size();
  if (d == 0) throw DataError("training vectors have no features");
  if (feature_ids.size() != d) throw ContractError("feature id list does not match vector length");
  if (!(params.C > 0.0)) throw ConfigError("C must be positive");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() != d) throw DataError("ragged training vectors");
    for (double v : x[i])
      if (!std::isfinite(v)) throw DataError("non-finite training feature");
    if (labels[i] == 1) pos = true;
    else if (labels[i] == 0) neg = true;
    else throw DataError("labels must be 0 or 1");
  }
  if (!pos || !neg) throw DataError("training set holds a single class");

  SvmModel m;
  m.feature_ids = std::move(feature_ids);
  m.C = params.C;
  m.gamma = params.gamma.value_or(1.0 / static_cast<double>(d));
  const auto zs = ZScore::fit(x);
  m.mean = zs.mean;
  m.scale = zs.scale;

  std::vector<std::vector<double>> z;
  z.reserve(n);
  for (const auto& row : x) z.push_back(zs.apply(row));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == 1 ? 1 : -1;

  detail::SignedKernel Q(z, y, m.gamma);
  const double C = params.C;
  std::vector<double> alpha(n, 0.0);
  std::vector<double> G(n, -1.0);  // gradient of 1/2 a'Qa - e'a

  auto objective = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += alpha[i] * (G[i] - 1.0);
    return -0.5 * s;
  };

  const std::int64_t max_iter = params.max_iter_factor * static_cast<std::int64_t>(n);
  std::int64_t iter = 0;
  double violation = 0.0;
  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * G[t];
      const bool up = (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0);
      const bool low = (y[t] == -1 && alpha[t] < C) || (y[t] == 1 && alpha[t] > 0.0);
      if (up && v > gmax) {
        gmax = v;
        i = t;
      }
      if (low && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    violation = gmax - gmin;
    if (i == n || j == n || violation <= params.tolerance) break;
    if (iter >= max_iter)
      throw NumericalError("SMO did not converge in " + std::to_string(max_iter) +
                           " iterations; KKT violation " + std::to_string(violation));
    ++iter;

    const auto Qi = Q.row(i, 0);
    const auto Qj = Q.row(j, 1);
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = Q.diag(i) + Q.diag(j) + 2.0 * Qi[j];
      if (quad <= 0.0) quad = 1e-12;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Q.diag(i) + Q.diag(j) - 2.0 * Qi[j];
      if (quad <= 0.0) quad = 1e-12;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) G[t] += Qi[t] * dai + Qj[t] * daj;
    if (params.record_objective) m.info.objective_trace.push_back(objective());
  }

  // Bias from free vectors, or the middle of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  int n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double r = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);
  m.bias = -r;

  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0.0) continue;
    m.support_vectors.push_back(z[t]);
    m.coef.push_back(alpha[t] * y[t]);
  }
  m.info.iterations = iter;
  m.info.final_violation = violation;
  m.info.dual_objective = objective();
  return m;
}

// Decision value for a vector already in the model's feature order (raw units).
inline double decision_value(const SvmModel& m, std::span<const double> raw) {
  if (raw.size() != m.dimension()) throw ContractError("feature vector length does not match model");
  std::vector<double> z(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) z[k] = (raw[k] - m.mean[k]) / m.scale[k];
  double f = m.bias;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
    f += m.coef[i] * detail::rbf(m.support_vectors[i], z, m.gamma);
  return f;
}

struct Prediction {
  int label;  // 1 iff decision > 0
  double decision;
};

inline Prediction predict(const SvmModel& m, std::span<const double> raw) {
  const double f = decision_value(m, raw);
  return {f > 0.0 ? 1 : 0, f};
}

inline std::vector<double> gather(const FeatureVector& v, std::span<const int> ids) {
  std::vector<double> out;
  out.reserve(ids.size());
  for (int id : ids) {
    auto x = v[id];
    if (!x) throw ContractError("feature f" + std::to_string(id) + " missing for model input");
    out.push_back(*x);
  }
  return out;
}

inline Prediction predict(const SvmModel& m, const FeatureVector& v) {
  return predict(m, gather(v, m.feature_ids));
}

inline nlohmann::json to_json(const SvmModel& m) {
  nlohmann::json j;
  j["kernel"] = {{"type", "rbf"}, {"gamma", m.gamma}};
  j["C"] = m.C;
  j["feature_ids"] = m.feature_ids;
  j["standardization"] = {{"mean", m.mean}, {"scale", m.scale}};
  j["bias"] = m.bias;
  j["coef"] = m.coef;
  j["support_vectors"] = m.support_vectors;
  j["training"] = {{"iterations", m.info.iterations},
                   {"final_violation", m.info.final_violation},
                   {"dual_objective", m.info.dual_objective},
                   {"threshold", m.threshold},
                   {"source", m.source}};
  j["training"]["fold"] = m.fold ? nlohmann::json(*m.fold) : nlohmann::json(nullptr);
  return j;
}

inline SvmModel svm_from_json(const nlohmann::json& j) {
  try {
    SvmModel m;
    if (j.at("kernel").at("type") != "rbf") throw ContractError("unsupported kernel");
    m.gamma = j.at("kernel").at("gamma").get<double>();
    m.C = j.at("C").get<double>();
    m.feature_ids = j.at("feature_ids").get<std::vector<int>>();
    m.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.scale = j.at("standardization").at("scale").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.coef = j.at("coef").get<std::vector<double>>();
    m.support_vectors = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    const auto& t = j.at("training");
    m.info.iterations = t.at("iterations").get<std::int64_t>();
    m.info.final_violation = t.at("final_violation").get<double>();
    m.info.dual_objective = t.at("dual_objective").get<double>();
    m.threshold = t.at("threshold").get<double>();
    m.source = t.at("source").get<std::string>();
    if (!t.at("fold").is_null()) m.fold = t.at("fold").get<int>();
    const std::size_t d = m.feature_ids.size();
    if (m.mean.size() != d || m.scale.size() != d || m.coef.size() != m.support_vectors.size())
      throw ContractError("inconsistent model dimensions");
    for (const auto& sv : m.support_vectors)
      if (sv.size() != d) throw ContractError("support vector dimension mismatch");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace ripen
