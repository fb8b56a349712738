#pragma once

#include "ncmfg/expr.hpp"
#include "ncmfg/grid.hpp"
#include "ncmfg/linalg.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace ncmfg {

// A scalar field phi(x, t). Terminal and static fields ignore t.
class Field {
 public:
  virtual ~Field() = default;
  virtual double value(const Vec& x, double t) const = 0;
  // Spatial gradient; the default is a central difference with step 1e-6.
  virtual Vec gradient(const Vec& x, double t) const;
  // Values at every grid node at time t.
  virtual void tabulate(const BoxGrid& grid, double t, std::span<double> out) const;
};

using FieldPtr = std::shared_ptr<const Field>;

// Closed-form field; gradients by forward-mode differentiation. The z slot is
// held at a fixed value.
class ExprField final : public Field {
 public:
  ExprField(Expression expr, int dim, double z = 0.0);
  double value(const Vec& x, double t) const override;
  Vec gradient(const Vec& x, double t) const override;
  const Expression& expression() const { return expr_; }

 private:
  Expression expr_;
  int dim_;
  double z_;
};

class LambdaField final : public Field {
 public:
  using Fn = std::function<double(const Vec&, double)>;
  using GradFn = std::function<Vec(const Vec&, double)>;
  explicit LambdaField(Fn fn, GradFn grad = {}) : fn_(std::move(fn)), grad_(std::move(grad)) {}
  double value(const Vec& x, double t) const override { return fn_(x, t); }
  Vec gradient(const Vec& x, double t) const override;

 private:
  Fn fn_;
  GradFn grad_;
};

// Space-time table on a grid: multilinear in space, linear in time over
// uniform layers t_k = k*dt. Gradients interpolate nodal central differences.
class TabulatedField final : public Field {
 public:
  TabulatedField(BoxGrid grid, double dt, std::vector<std::vector<double>> layers);
  double value(const Vec& x, double t) const override;
  Vec gradient(const Vec& x, double t) const override;

  const BoxGrid& grid() const { return grid_; }
  std::size_t layer_count() const { return layers_.size(); }
  const std::vector<double>& layer(std::size_t k) const { return layers_[k]; }

 private:
  void bracket(double t, std::size_t& k, double& w) const;
  Vec layer_gradient(std::size_t k, const Vec& x) const;

  BoxGrid grid_;
  double dt_;
  std::vector<std::vector<double>> layers_;
};

FieldPtr constant_field(double c);
FieldPtr expr_field(const std::string& text, int dim, double z = 0.0);

}  // namespace ncmfg
