#pragma once

// Momentum-descent solver for composite objectives f(x) + sum_i w_i*|x_i|
// under the constraint x >= 0.
//
// This is FISTA with two changes to the momentum handling: the momentum of a
// dimension is stopped as soon as that dimension hits the x >= 0 boundary or
// its gradient changes sign, and the momentum braking coefficient eta is
// fixed at 1 (the classic (t-1)/t_next schedule is still available for
// comparison). The step is taken along the gradient of the full composite
// cost in one go rather than as a gradient step followed by a separate
// shrinkage step.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "seudo/common.hpp"

namespace seudo {

// The smooth part comes as a callback that returns f(x) and writes grad f(x).
struct Objective
{
	std::size_t dim = 0;
	std::function<double(std::span<const double> x, std::span<double> grad)> eval_grad;
	// Per-dimension l1 weights, >= 0. Empty means all zero.
	std::vector<double> l1_weights;

	void validate() const;
};

// A linear operator chi, accessed only through products. The Lipschitz
// estimate needs products with the entrywise absolute value |chi|.
class LinearOperator
{
public:
	virtual ~LinearOperator() = default;

	virtual std::size_t rows() const = 0;
	virtual std::size_t cols() const = 0;

	// out = chi * x
	virtual void forward(std::span<const double> x, std::span<double> out) const = 0;
	// out = chi^T * v
	virtual void adjoint(std::span<const double> v, std::span<double> out) const = 0;
	// out = |chi| * x
	virtual void abs_forward(std::span<const double> x, std::span<double> out) const = 0;
	// out = |chi|^T * v
	virtual void abs_adjoint(std::span<const double> v, std::span<double> out) const = 0;
};

// Plain row-major dense matrix.
class DenseOperator : public LinearOperator
{
public:
	DenseOperator(std::size_t rows, std::size_t cols, std::vector<double> data);

	std::size_t rows() const override { return rows_; }
	std::size_t cols() const override { return cols_; }
	double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

	void forward(std::span<const double> x, std::span<double> out) const override;
	void adjoint(std::span<const double> v, std::span<double> out) const override;
	void abs_forward(std::span<const double> x, std::span<double> out) const override;
	void abs_adjoint(std::span<const double> v, std::span<double> out) const override;

private:
	std::size_t rows_;
	std::size_t cols_;
	std::vector<double> data_;
};

// f(x) = ||y - chi x||^2 with the given l1 weights. The operator and y must
// outlive the returned objective.
Objective least_squares_objective(const LinearOperator &chi, std::span<const double> y, std::vector<double> l1_weights = {});

// Per-dimension Gershgorin bounds for f = ||y - chi x||^2:
//   L_i = 2 * sum_j |chi^T chi|_ij <= 2 * (|chi|^T |chi| 1)_i
// computed with two operator passes, never forming chi^T chi. Dimensions
// whose column is zero get the largest bound of the others.
std::vector<double> estimate_lipschitz_per_dimension(const Objective &objective, const LinearOperator &chi);

// Scalar bound: the maximum of the per-dimension ones, which upper-bounds
// the largest eigenvalue of the Hessian 2 chi^T chi.
double estimate_lipschitz(const Objective &objective, const LinearOperator &chi);

enum class MomentumSchedule
{
	fixed_unit,     // eta = 1
	fista,          // eta = (t - 1) / t_next
};

enum class StopReason
{
	tolerance,
	max_iter,
};

struct SolverConfig
{
	int max_iter = 2000;
	// Relative spread of the cost over the last `window` iterations.
	double tol = 1e-6;
	int window = 3;
	MomentumSchedule momentum = MomentumSchedule::fixed_unit;
};

struct OptimizerState
{
	std::vector<double> x;
	std::vector<double> diff;
	std::vector<double> gradient_last;
	std::vector<double> gradient;
	// Either one entry shared by all dimensions or one per dimension.
	std::vector<double> L;
	double t = 1.;
	int steps = 0;
	// Composite cost at the point where the last gradient was taken.
	double cost = 0.;

	OptimizerState() = default;
	OptimizerState(std::vector<double> x0, std::vector<double> lipschitz);

	double inv_L(std::size_t i) const { return 1. / (L.size() == 1 ? L[0] : L[i]); }
};

// One iteration of the modified FISTA. Throws Error("divergence detected")
// on a non-finite cost or gradient.
void step(OptimizerState &state, const Objective &objective, MomentumSchedule momentum = MomentumSchedule::fixed_unit);

// Full composite cost f(x) + sum w_i |x_i|.
double composite_cost(const Objective &objective, std::span<const double> x);

struct SolveReport
{
	int iterations = 0;
	double final_cost = 0.;
	bool converged = false;
	StopReason stop_reason = StopReason::max_iter;
};

struct SolveResult
{
	std::vector<double> x;
	SolveReport report;
};

// Runs step() until the cost settles or max_iter is reached. x0 must be >= 0.
SolveResult solve(const Objective &objective, std::vector<double> x0, std::vector<double> lipschitz, const SolverConfig &config = {});

} // namespace seudo
