#include "seudo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace seudo {

void Objective::validate() const
{
	if (dim == 0)
		throw Error("objective dimension must be positive");
	if (!eval_grad)
		throw Error("objective has no gradient callback");
	if (!l1_weights.empty() && l1_weights.size() != dim)
		throw Error("l1 weight vector length does not match dimension");
	for (double w : l1_weights) {
		if (!(w >= 0.))
			throw Error("l1 weights must be non-negative");
	}
}

// ------------------- DenseOperator -------------------------

DenseOperator::DenseOperator(std::size_t rows, std::size_t cols, std::vector<double> data)
	: rows_(rows), cols_(cols), data_(std::move(data))
{
	if (data_.size() != rows_ * cols_)
		throw Error("dense operator data size mismatch");
}

void DenseOperator::forward(std::span<const double> x, std::span<double> out) const
{
	for (std::size_t r = 0; r < rows_; r++) {
		double s = 0.;
		for (std::size_t c = 0; c < cols_; c++)
			s += data_[r * cols_ + c] * x[c];
		out[r] = s;
	}
}

void DenseOperator::adjoint(std::span<const double> v, std::span<double> out) const
{
	std::fill(out.begin(), out.end(), 0.);
	for (std::size_t r = 0; r < rows_; r++)
		for (std::size_t c = 0; c < cols_; c++)
			out[c] += data_[r * cols_ + c] * v[r];
}

void DenseOperator::abs_forward(std::span<const double> x, std::span<double> out) const
{
	for (std::size_t r = 0; r < rows_; r++) {
		double s = 0.;
		for (std::size_t c = 0; c < cols_; c++)
			s += std::fabs(data_[r * cols_ + c]) * x[c];
		out[r] = s;
	}
}

void DenseOperator::abs_adjoint(std::span<const double> v, std::span<double> out) const
{
	std::fill(out.begin(), out.end(), 0.);
	for (std::size_t r = 0; r < rows_; r++)
		for (std::size_t c = 0; c < cols_; c++)
			out[c] += std::fabs(data_[r * cols_ + c]) * v[r];
}

// ------------------- objective helpers ---------------------

Objective least_squares_objective(const LinearOperator &chi, std::span<const double> y, std::vector<double> l1_weights)
{
	if (y.size() != chi.rows())
		throw Error("observation length does not match operator rows");
	Objective obj;
	obj.dim = chi.cols();
	obj.l1_weights = std::move(l1_weights);
	const LinearOperator *op = &chi;
	obj.eval_grad = [op, y, v = std::vector<double>(chi.rows())](std::span<const double> x, std::span<double> grad) mutable {
		op->forward(x, v);
		double cost = 0.;
		for (std::size_t j = 0; j < v.size(); j++) {
			v[j] = y[j] - v[j];
			cost += v[j] * v[j];
		}
		op->adjoint(v, grad);
		for (double &g : grad)
			g *= -2.;
		return cost;
	};
	return obj;
}

std::vector<double> estimate_lipschitz_per_dimension(const Objective &objective, const LinearOperator &chi)
{
	if (objective.dim != chi.cols())
		throw Error("objective dimension does not match operator columns");
	std::vector<double> ones(chi.cols(), 1.);
	std::vector<double> col_sums(chi.rows());
	chi.abs_forward(ones, col_sums);
	std::vector<double> L(chi.cols());
	chi.abs_adjoint(col_sums, L);

	double top = 0.;
	for (double &l : L) {
		l *= 2.;
		top = std::max(top, l);
	}
	if (!(top > 0.))
		throw Error("degenerate operator");
	for (double &l : L) {
		if (l <= 0.)
			l = top;
	}
	return L;
}

double estimate_lipschitz(const Objective &objective, const LinearOperator &chi)
{
	auto L = estimate_lipschitz_per_dimension(objective, chi);
	return *std::max_element(L.begin(), L.end());
}

double composite_cost(const Objective &objective, std::span<const double> x)
{
	std::vector<double> grad(objective.dim);
	double cost = objective.eval_grad(x, grad);
	if (!objective.l1_weights.empty()) {
		for (std::size_t i = 0; i < x.size(); i++)
			cost += objective.l1_weights[i] * std::fabs(x[i]);
	}
	return cost;
}

// ------------------- the iteration -------------------------

OptimizerState::OptimizerState(std::vector<double> x0, std::vector<double> lipschitz)
	: x(std::move(x0)), diff(x.size(), 0.), gradient_last(x.size(), 0.), L(std::move(lipschitz))
{
	if (L.size() != 1 && L.size() != x.size())
		throw Error("Lipschitz vector must have 1 or dim entries");
	for (double l : L) {
		if (!(l > 0.) || !std::isfinite(l))
			throw Error("Lipschitz estimate must be positive and finite");
	}
}

void step(OptimizerState &st, const Objective &objective, MomentumSchedule momentum)
{
	const std::size_t n = st.x.size();
	if (n != objective.dim)
		throw Error("state dimension does not match objective");

	double eta = 1.;
	if (momentum == MomentumSchedule::fista) {
		double t_next = (1. + std::sqrt(1. + 4. * st.t * st.t)) / 2.;
		eta = (st.t - 1.) / t_next;
		if (st.steps != 0)
			st.t = t_next;
	}

	for (std::size_t i = 0; i < n; i++) {
		st.x[i] += eta * st.diff[i];
		if (st.x[i] < 0.) {
			st.x[i] = 0.;
			st.diff[i] = 0.;
		}
	}

	auto &grad = st.gradient;
	grad.resize(n);
	double cost = objective.eval_grad(st.x, grad);
	// On the feasible orthant |x_i| = x_i, so the l1 term contributes the
	// constant w_i to the gradient, boundary included.
	if (!objective.l1_weights.empty()) {
		for (std::size_t i = 0; i < n; i++) {
			grad[i] += objective.l1_weights[i];
			cost += objective.l1_weights[i] * st.x[i];
		}
	}
	if (!std::isfinite(cost))
		throw Error("divergence detected");

	for (std::size_t i = 0; i < n; i++) {
		double g = grad[i];
		if (!std::isfinite(g))
			throw Error("divergence detected");
		double move = g * st.inv_L(i);
		st.x[i] -= move;
		if (st.x[i] < 0.) {
			st.x[i] = 0.;
			st.diff[i] = 0.;
			grad[i] = 0.;
		} else if (g * st.gradient_last[i] < 0.) {
			st.diff[i] = 0.;
		} else {
			st.diff[i] -= move;
		}
	}
	st.gradient_last.swap(grad);
	st.cost = cost;
	st.steps++;
}

SolveResult solve(const Objective &objective, std::vector<double> x0, std::vector<double> lipschitz, const SolverConfig &config)
{
	objective.validate();
	if (x0.size() != objective.dim)
		throw Error("initial point dimension does not match objective");
	for (double v : x0) {
		if (!(v >= 0.))
			throw Error("initial point must be non-negative");
	}
	const int window = std::max(config.window, 2);

	OptimizerState st(std::move(x0), std::move(lipschitz));
	SolveResult res;
	std::deque<double> recent;
	for (int it = 0; it < config.max_iter; it++) {
		step(st, objective, config.momentum);
		res.report.iterations = it + 1;
		recent.push_back(st.cost);
		if (int(recent.size()) > window)
			recent.pop_front();
		if (int(recent.size()) == window) {
			auto [lo, hi] = std::minmax_element(recent.begin(), recent.end());
			double scale = std::max(std::fabs(*lo), std::fabs(*hi));
			if (*hi - *lo <= config.tol * scale) {
				res.report.converged = true;
				res.report.stop_reason = StopReason::tolerance;
				break;
			}
		}
	}
	res.report.final_cost = composite_cost(objective, st.x);
	res.x = std::move(st.x);
	return res;
}

} // namespace seudo
