#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfmlp {

// Uniform grid over [t0, t1] with trapezoid quadrature weights
// (w_1 = w_G = dt/2, interior weights dt).
class TimeGrid {
 public:
  TimeGrid() = default;

  TimeGrid(double t0, double t1, std::size_t size) : t0_(t0), t1_(t1) {
    if (!(t1 > t0)) throw std::invalid_argument("TimeGrid: t1 must exceed t0");
    if (size < 2) throw std::invalid_argument("TimeGrid: need at least 2 points");
    points_.resize(size);
    weights_.resize(size);
    double dt = (t1 - t0) / static_cast<double>(size - 1);
    for (std::size_t g = 0; g < size; ++g) {
      points_[g] = t0 + dt * static_cast<double>(g);
      weights_[g] = dt;
    }
    points_.back() = t1;
    weights_.front() = dt / 2.0;
    weights_.back() = dt / 2.0;
  }

  double t0() const { return t0_; }
  double t1() const { return t1_; }
  double width() const { return t1_ - t0_; }
  std::size_t size() const { return points_.size(); }
  double spacing() const { return (t1_ - t0_) / static_cast<double>(size() - 1); }
  const std::vector<double>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }
  bool contains(double t) const { return t >= t0_ && t <= t1_; }

  // Weighted inner product of grid functions: sum_g w_g a_g b_g.
  double inner(std::span<const double> a, std::span<const double> b) const {
    check_length(a.size());
    check_length(b.size());
    double s = 0.0;
    for (std::size_t g = 0; g < size(); ++g) s += weights_[g] * a[g] * b[g];
    return s;
  }

  double quadrature(std::span<const double> values) const {
    check_length(values.size());
    double s = 0.0;
    for (std::size_t g = 0; g < size(); ++g) s += weights_[g] * values[g];
    return s;
  }

  // Piecewise-linear interpolation; t must lie in [t0, t1].
  double interpolate(std::span<const double> values, double t) const {
    check_length(values.size());
    if (!contains(t))
      throw std::out_of_range("TimeGrid: time " + std::to_string(t) +
                              " outside [" + std::to_string(t0_) + ", " +
                              std::to_string(t1_) + "]");
    double dt = spacing();
    std::size_t cell = static_cast<std::size_t>((t - t0_) / dt);
    if (cell >= size() - 1) cell = size() - 2;
    double frac = (t - points_[cell]) / dt;
    return values[cell] + frac * (values[cell + 1] - values[cell]);
  }

  // Integral of the piecewise-linear interpolant over [a, b] within the domain.
  double integrate(std::span<const double> values, double a, double b) const {
    check_length(values.size());
    if (a > b) std::swap(a, b);
    if (!contains(a) || !contains(b))
      throw std::out_of_range("TimeGrid: integration bounds outside domain");
    double dt = spacing();
    double total = 0.0;
    for (std::size_t g = 0; g + 1 < size(); ++g) {
      double lo = std::max(a, points_[g]);
      double hi = std::min(b, points_[g + 1]);
      if (hi <= lo) continue;
      double vlo = values[g] + (lo - points_[g]) / dt * (values[g + 1] - values[g]);
      double vhi = values[g] + (hi - points_[g]) / dt * (values[g + 1] - values[g]);
      total += 0.5 * (vlo + vhi) * (hi - lo);
    }
    return total;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.t0_ == b.t0_ && a.t1_ == b.t1_ && a.points_ == b.points_;
  }

 private:
  void check_length(std::size_t n) const {
    if (n != size())
      throw std::invalid_argument("TimeGrid: value vector length mismatch");
  }

  double t0_ = 0.0;
  double t1_ = 1.0;
  std::vector<double> points_;
  std::vector<double> weights_;
};

}  // namespace sfmlp
