// Tensor-product grids on boxes, nodal multilinear fields per realization,
// cell-centered piecewise-constant gradients, weighted norms.
//
// Quadrature convention: one-point cell-center rule for cell data, nodal
// trapezoidal weights for node data. Both are fixed by construction so the
// unfolding identities hold exactly.
#pragma once

#include <memory>
#include <optional>
#include <string>

#include "stochunfold/common.hpp"
#include "stochunfold/env.hpp"

namespace stochunfold {

struct Domain {
  int d = 1;
  Int3 n{1, 1, 1};          // cells per axis, 1 on unused axes
  Vec3 size{1.0, 1.0, 1.0};  // box edge lengths, 1 on unused axes

  Vec3 h() const {
    return {size[0] / n[0], size[1] / n[1], size[2] / n[2]};
  }
  Int3 nodes_per_axis() const {
    Int3 nn{1, 1, 1};
    for (int i = 0; i < d; ++i) nn[i] = n[i] + 1;
    return nn;
  }
  std::int64_t num_cells() const { return cells_of(n); }
  std::int64_t num_nodes() const { return cells_of(nodes_per_axis()); }
  double cell_volume() const {
    Vec3 hh = h();
    double v = 1.0;
    for (int i = 0; i < d; ++i) v *= hh[i];
    return v;
  }
  Vec3 node_pos(const Idx3& j) const {
    Vec3 hh = h();
    return {j[0] * hh[0], j[1] * hh[1], j[2] * hh[2]};
  }
  Vec3 cell_center(const Idx3& c) const {
    Vec3 hh = h();
    return {(c[0] + 0.5) * hh[0], (c[1] + 0.5) * hh[1], (c[2] + 0.5) * hh[2]};
  }
  bool boundary_node(const Idx3& j) const {
    for (int i = 0; i < d; ++i)
      if (j[i] == 0 || j[i] == n[i]) return true;
    return false;
  }
  std::vector<double> trapezoid_weights() const;  // per node
};

std::shared_ptr<const Domain> make_domain(int d, Int3 n, Vec3 size = {1.0, 1.0, 1.0});

enum class Stage { node, cell };

// Random field: one flat value array per realization, m components per site.
// Weights are copied from the sample plan so plain (deterministic) fields can
// carry a single unit-weight row without a plan.
struct RandomField {
  std::shared_ptr<const Domain> domain;
  std::shared_ptr<const SamplePlan> plan;  // null for plain deterministic data
  Stage stage = Stage::node;
  int m = 1;
  std::optional<double> eps;  // scale tag set by unfolding-aware constructors
  std::vector<double> weights;
  std::vector<std::vector<double>> data;  // [realization][site * m + comp]

  Int3 extents() const { return stage == Stage::node ? domain->nodes_per_axis() : domain->n; }
  std::int64_t sites() const { return stage == Stage::node ? domain->num_nodes() : domain->num_cells(); }
  std::size_t realizations() const { return data.size(); }
};

RandomField make_field(std::shared_ptr<const Domain> domain,
                       std::shared_ptr<const SamplePlan> plan, Stage stage, int m);
// Single-realization field with weight 1 and no plan.
RandomField make_plain_field(std::shared_ptr<const Domain> domain, Stage stage, int m);
// Copy one realization's data to every realization of `plan`.
RandomField replicate(const RandomField& single, std::shared_ptr<const SamplePlan> plan);

// Cell-centered gradient of the multilinear interpolant; m components in
// produce m*d components out, laid out q*d + axis.
RandomField gradient(const RandomField& u);
// Symmetrized gradient for m == d displacement fields; d*d components.
RandomField sym_gradient(const RandomField& u);
// Multilinear values at cell centers (corner averages).
RandomField cell_average(const RandomField& u);

double norm_p(const RandomField& u, double p);
double inner(const RandomField& u, const RandomField& v);
// y += alpha * x (matching layout required)
void axpy(double alpha, const RandomField& x, RandomField& y);

// Discrete Poincare constant estimate: sup ||u||_2 / ||grad u||_2 over
// zero-boundary nodal fields, by power iteration on the generalized problem.
double poincare_constant(const Domain& domain, int iterations = 50);

void write_csv(const RandomField& u, const std::string& path);
void write_binary(const RandomField& u, const std::string& path);

// Binary dump contents, for reading exported fields back.
struct BinaryFieldData {
  int d = 0, m = 0;
  Stage stage = Stage::node;
  Int3 n{1, 1, 1};
  Vec3 size{1, 1, 1};
  bool has_eps = false;
  double eps = 0.0;
  std::vector<double> weights;
  std::vector<std::vector<double>> data;
};
BinaryFieldData read_binary(const std::string& path);

}  // namespace stochunfold
