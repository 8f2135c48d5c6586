#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vigpi {

/// Thrown when an iterative procedure hits its iteration cap.
class IterationCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Rows are states, columns are actions.
class DenseTable {
 public:
  DenseTable() = default;
  DenseTable(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseTable from_rows(const std::vector<std::vector<double>>& rows) {
    DenseTable t(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != t.cols_) throw std::invalid_argument("ragged table rows");
      for (std::size_t c = 0; c < t.cols_; ++c) t(r, c) = rows[r][c];
    }
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const { return data_; }

  std::vector<std::vector<double>> to_rows() const {
    std::vector<std::vector<double>> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r].assign(row(r).begin(), row(r).end());
    return out;
  }

  bool same_shape(const DenseTable& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const DenseTable&, const DenseTable&) = default;

 protected:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-(state, action) values q(s, a).
class QTable : public DenseTable {
 public:
  using DenseTable::DenseTable;
  QTable() = default;
  explicit QTable(DenseTable t) : DenseTable(std::move(t)) {}
  static QTable from_rows(const std::vector<std::vector<double>>& rows) {
    return QTable(DenseTable::from_rows(rows));
  }
  bool operator==(const QTable&) const = default;
};

/// Per-state values v(s).
using ValueVector = std::vector<double>;

/// Stochastic policy: row s holds pi(. | s).
class TabularPolicy : public DenseTable {
 public:
  using DenseTable::DenseTable;
  TabularPolicy() = default;
  explicit TabularPolicy(DenseTable t) : DenseTable(std::move(t)) {}

  /// Builds from explicit rows and rejects rows that are not distributions.
  static TabularPolicy from_rows(const std::vector<std::vector<double>>& rows) {
    TabularPolicy p(DenseTable::from_rows(rows));
    if (auto err = p.check()) throw std::invalid_argument(*err);
    return p;
  }

  static TabularPolicy uniform(std::size_t states, std::size_t actions) {
    if (actions == 0) throw std::invalid_argument("policy needs at least one action");
    return TabularPolicy(states, actions, 1.0 / static_cast<double>(actions));
  }

  static TabularPolicy deterministic(const std::vector<std::size_t>& actions,
                                     std::size_t num_actions) {
    TabularPolicy p(actions.size(), num_actions, 0.0);
    for (std::size_t s = 0; s < actions.size(); ++s) {
      if (actions[s] >= num_actions) throw std::invalid_argument("action index out of range");
      p(s, actions[s]) = 1.0;
    }
    return p;
  }

  /// Returns a description of the first broken row, if any.
  std::optional<std::string> check(double tol = 1e-12) const {
    for (std::size_t s = 0; s < rows_; ++s) {
      double sum = 0.0;
      for (double p : row(s)) {
        if (!(p >= 0.0) || !std::isfinite(p))
          return "policy row " + std::to_string(s) + " has a negative or non-finite entry";
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol)
        return "policy row " + std::to_string(s) + " does not sum to 1";
    }
    return std::nullopt;
  }

  bool is_deterministic_at(std::size_t s) const {
    std::size_t ones = 0;
    for (double p : row(s)) {
      if (p == 1.0) ++ones;
      else if (p != 0.0) return false;
    }
    return ones == 1;
  }

  bool is_deterministic() const {
    for (std::size_t s = 0; s < rows_; ++s)
      if (!is_deterministic_at(s)) return false;
    return true;
  }

  /// Selected action of a deterministic row.
  std::size_t action(std::size_t s) const {
    for (std::size_t a = 0; a < cols_; ++a)
      if ((*this)(s, a) == 1.0) return a;
    throw std::invalid_argument("policy row " + std::to_string(s) + " is not deterministic");
  }

  bool operator==(const TabularPolicy&) const = default;
};

inline void require_same_shape(const DenseTable& a, const DenseTable& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

/// Sum_a pi(a|s) q(s,a).
inline double expected_value(std::span<const double> pi, std::span<const double> q) {
  double v = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) v += pi[a] * q[a];
  return v;
}

inline double max_of(std::span<const double> xs) {
  double m = xs.front();
  for (double x : xs) m = x > m ? x : m;
  return m;
}

inline double sup_norm_diff(const DenseTable& a, const DenseTable& b) {
  require_same_shape(a, b, "sup_norm_diff");
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

}  // namespace vigpi
