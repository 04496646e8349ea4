#include "seudo/seudo_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seudo/thread_pool.hpp"

namespace seudo {

// ------------------- KernelGrid ----------------------------

namespace {

// Centers along one axis: ceil(len / stride) of them, centered.
std::vector<int> axis_centers(int len, int stride)
{
	int n = (len + stride - 1) / stride;
	int offset = (len - 1 - (n - 1) * stride) / 2;
	std::vector<int> out(n);
	for (int i = 0; i < n; i++)
		out[i] = offset + i * stride;
	return out;
}

// Distance from each coordinate to the closest center.
std::vector<int> axis_gaps(int len, const std::vector<int> &centers)
{
	std::vector<int> gap(len, std::numeric_limits<int>::max());
	for (int p = 0; p < len; p++)
		for (int c : centers)
			gap[p] = std::min(gap[p], std::abs(p - c));
	return gap;
}

} // namespace

KernelGrid build_kernel_grid(FrameGeometry geometry, int radius, int stride, double sigma)
{
	if (geometry.width < 1 || geometry.height < 1)
		throw Error("frame dimensions must be positive");
	if (radius < 1)
		throw Error("kernel radius must be at least 1");
	if (stride < 1)
		throw Error("kernel stride must be at least 1");

	KernelGrid grid;
	grid.geometry = geometry;
	grid.radius = radius;
	grid.stride = stride;
	grid.sigma = sigma > 0. ? sigma : radius / 2.;

	auto rows = axis_centers(geometry.height, stride);
	auto cols = axis_centers(geometry.width, stride);

	// The lattice is separable, so the worst pixel pairs the worst row gap
	// with the worst column gap.
	auto rg = axis_gaps(geometry.height, rows);
	auto cg = axis_gaps(geometry.width, cols);
	long worst_r = *std::max_element(rg.begin(), rg.end());
	long worst_c = *std::max_element(cg.begin(), cg.end());
	if (worst_r * worst_r + worst_c * worst_c > long(radius) * radius)
		throw Error("coverage gap");

	for (int r : rows)
		for (int c : cols)
			grid.centers.emplace_back(r, c);

	const double two_s2 = 2. * grid.sigma * grid.sigma;
	for (int dr = -radius; dr <= radius; dr++) {
		for (int dc = -radius; dc <= radius; dc++) {
			int d2 = dr * dr + dc * dc;
			if (d2 > radius * radius)
				continue;
			grid.stencil.push_back({dr, dc, std::exp(-d2 / two_s2)});
		}
	}
	return grid;
}

Image KernelGrid::bump_image(std::size_t k) const
{
	Image img(geometry.width, geometry.height);
	auto [cr, cc] = centers.at(k);
	for (const auto &s : stencil) {
		int r = cr + s.drow, c = cc + s.dcol;
		if (r >= 0 && r < geometry.height && c >= 0 && c < geometry.width)
			img.at(r, c) = s.value;
	}
	return img;
}

// ------------------- SeudoOperator -------------------------

SeudoOperator::SeudoOperator(const SeudoProblem &problem, bool include_kernels, ThreadPool *pool)
	: geometry_(problem.geometry),
	n_(problem.num_profiles()),
	k_(include_kernels ? problem.num_kernels() : 0),
	grid_(include_kernels ? problem.grid : nullptr),
	pool_(pool)
{
	if (grid_ && !(grid_->geometry == geometry_))
		throw Error("kernel grid geometry does not match the frame");
	profiles_.resize(n_);
	for (std::size_t p = 0; p < n_; p++) {
		auto &dst = profiles_[p];
		for (const auto &px : problem.profiles[p]) {
			if (px.row < 0 || px.row >= geometry_.height || px.col < 0 || px.col >= geometry_.width)
				throw Error("profile footprint outside the frame");
			dst.push_back({std::size_t(px.row) * geometry_.width + px.col, px.weight});
		}
		std::sort(dst.begin(), dst.end(), [](const Entry &a, const Entry &b) { return a.index < b.index; });
	}
}

void SeudoOperator::forwardRows(std::span<const double> x, std::span<double> out, int row0, int row1, bool absolute) const
{
	const int W = geometry_.width;
	const std::size_t lo = std::size_t(row0) * W, hi = std::size_t(row1) * W;
	std::fill(out.begin() + lo, out.begin() + hi, 0.);

	for (std::size_t p = 0; p < n_; p++) {
		double a = x[p];
		if (a == 0.)
			continue;
		if (absolute)
			a = std::fabs(a);
		const auto &entries = profiles_[p];
		auto it = std::lower_bound(entries.begin(), entries.end(), lo,
			[](const Entry &e, std::size_t v) { return e.index < v; });
		for (; it != entries.end() && it->index < hi; ++it)
			out[it->index] += a * (absolute ? std::fabs(it->weight) : it->weight);
	}

	if (!grid_)
		return;
	const int R = grid_->radius;
	for (std::size_t k = 0; k < k_; k++) {
		double a = x[n_ + k];
		if (a == 0.)
			continue;
		auto [cr, cc] = grid_->centers[k];
		if (cr + R < row0 || cr - R >= row1)
			continue;
		if (absolute)
			a = std::fabs(a);
		for (const auto &s : grid_->stencil) {
			int r = cr + s.drow;
			if (r < row0 || r >= row1)
				continue;
			int c = cc + s.dcol;
			if (c < 0 || c >= W)
				continue;
			out[std::size_t(r) * W + c] += a * s.value;
		}
	}
}

void SeudoOperator::adjointRange(std::span<const double> v, std::span<double> out, std::size_t d0, std::size_t d1, bool absolute) const
{
	const int W = geometry_.width, H = geometry_.height;
	for (std::size_t d = d0; d < d1; d++) {
		double s = 0.;
		if (d < n_) {
			for (const auto &e : profiles_[d])
				s += (absolute ? std::fabs(e.weight) : e.weight) * v[e.index];
		} else {
			auto [cr, cc] = grid_->centers[d - n_];
			for (const auto &st : grid_->stencil) {
				int r = cr + st.drow, c = cc + st.dcol;
				if (r < 0 || r >= H || c < 0 || c >= W)
					continue;
				s += st.value * v[std::size_t(r) * W + c];
			}
		}
		out[d] = s;
	}
}

void SeudoOperator::forwardImpl(std::span<const double> x, std::span<double> out, bool absolute) const
{
	if (x.size() != cols() || out.size() != rows())
		throw Error("dimension mismatch");
	const int H = geometry_.height;
	std::size_t parts = pool_ ? std::min<std::size_t>(pool_->size(), std::size_t(H)) : 1;
	if (parts <= 1) {
		forwardRows(x, out, 0, H, absolute);
		return;
	}
	auto errs = pool_->parallel_for(parts, [&](std::size_t i) {
		int r0 = int(i * H / parts), r1 = int((i + 1) * H / parts);
		forwardRows(x, out, r0, r1, absolute);
	});
	for (auto &e : errs)
		if (e)
			std::rethrow_exception(e);
}

void SeudoOperator::adjointImpl(std::span<const double> v, std::span<double> out, bool absolute) const
{
	if (v.size() != rows() || out.size() != cols())
		throw Error("dimension mismatch");
	const std::size_t D = cols();
	std::size_t parts = pool_ ? std::min<std::size_t>(pool_->size(), D) : 1;
	if (parts <= 1) {
		adjointRange(v, out, 0, D, absolute);
		return;
	}
	auto errs = pool_->parallel_for(parts, [&](std::size_t i) {
		adjointRange(v, out, i * D / parts, (i + 1) * D / parts, absolute);
	});
	for (auto &e : errs)
		if (e)
			std::rethrow_exception(e);
}

void SeudoOperator::forward(std::span<const double> x, std::span<double> out) const
{
	forwardImpl(x, out, false);
}

void SeudoOperator::adjoint(std::span<const double> v, std::span<double> out) const
{
	adjointImpl(v, out, false);
}

void SeudoOperator::abs_forward(std::span<const double> x, std::span<double> out) const
{
	forwardImpl(x, out, true);
}

void SeudoOperator::abs_adjoint(std::span<const double> v, std::span<double> out) const
{
	adjointImpl(v, out, true);
}

// ------------------- evaluation ----------------------------

namespace {

void check_problem(const SeudoProblem &problem)
{
	if (problem.y.size() != problem.geometry.pixels())
		throw Error("dimension mismatch");
	if (problem.lambda < 0. || problem.gamma < 0.)
		throw Error("lambda and gamma must be non-negative");
}

} // namespace

std::vector<double> apply_forward(const SeudoProblem &problem, std::span<const double> psi)
{
	if (psi.size() != problem.dim())
		throw Error("dimension mismatch");
	SeudoOperator chi(problem, true);
	std::vector<double> out(chi.rows());
	chi.forward(psi, out);
	return out;
}

CostGradient gradient_two_pass(const SeudoProblem &problem, std::span<const double> psi, ThreadPool *pool)
{
	check_problem(problem);
	if (psi.size() != problem.dim())
		throw Error("dimension mismatch");
	SeudoOperator chi(problem, true, pool);
	std::vector<double> v(chi.rows());
	chi.forward(psi, v);
	CostGradient out;
	for (std::size_t j = 0; j < v.size(); j++) {
		v[j] = problem.y[j] - v[j];
		out.cost += v[j] * v[j];
	}
	out.grad.resize(chi.cols());
	chi.adjoint(v, out.grad);
	const std::size_t N = problem.num_profiles();
	for (std::size_t m = 0; m < out.grad.size(); m++) {
		out.grad[m] *= -2.;
		if (m >= N) {
			double c = psi[m];
			out.cost += problem.lambda * std::fabs(c);
			out.grad[m] += problem.lambda * double((c > 0.) - (c < 0.));
		}
	}
	return out;
}

namespace {

struct BranchResult
{
	std::vector<double> psi;
	double value = 0.;
	int iterations = 0;
};

BranchResult solve_branch(const SeudoProblem &problem, bool with_kernels, std::vector<double> x0, const SeudoSolveOptions &options)
{
	SeudoOperator chi(problem, with_kernels, options.pool);
	std::vector<double> weights(chi.cols(), 0.);
	for (std::size_t m = problem.num_profiles(); m < weights.size(); m++)
		weights[m] = problem.lambda;
	Objective obj = least_squares_objective(chi, problem.y, std::move(weights));
	auto L = estimate_lipschitz_per_dimension(obj, chi);
	auto res = solve(obj, std::move(x0), std::move(L), options.solver);
	return {std::move(res.x), res.report.final_cost, res.report.iterations};
}

} // namespace

SeudoSolution seudo_solve(const SeudoProblem &problem, std::optional<std::span<const double>> warm_start, const SeudoSolveOptions &options)
{
	check_problem(problem);
	const std::size_t N = problem.num_profiles(), K = problem.num_kernels();
	const std::size_t M = problem.y.size();

	std::vector<double> warm(N + K, 0.);
	if (warm_start) {
		const auto &ws = *warm_start;
		if (ws.size() != N && ws.size() != N + K)
			throw Error("warm start length does not match the problem");
		for (std::size_t i = 0; i < ws.size(); i++)
			warm[i] = std::max(0., ws[i]);
	}

	SeudoSolution sol;
	sol.phi.assign(N, 0.);
	sol.c.assign(K, 0.);

	if (N > 0) {
		auto a = solve_branch(problem, false, std::vector<double>(warm.begin(), warm.begin() + N), options);
		sol.phi = std::move(a.psi);
		sol.profiles_only_value = a.value;
		sol.iterations += a.iterations;
	} else {
		double e = 0.;
		for (double v : problem.y)
			e += v * v;
		sol.profiles_only_value = e;
	}

	sol.profiles_plus_blobs_value = problem.gamma;
	if (K > 0 && sol.profiles_only_value > problem.gamma) {
		auto b = solve_branch(problem, true, warm, options);
		sol.blobs_evaluated = true;
		sol.profiles_plus_blobs_value = b.value + problem.gamma;
		sol.iterations += b.iterations;
		if (sol.profiles_plus_blobs_value < sol.profiles_only_value) {
			sol.branch = Branch::profiles_plus_blobs;
			sol.phi.assign(b.psi.begin(), b.psi.begin() + N);
			sol.c.assign(b.psi.begin() + N, b.psi.end());
		}
	} else if (K == 0) {
		sol.profiles_plus_blobs_value = std::numeric_limits<double>::infinity();
	}

	// Residuals of the winning branch.
	SeudoOperator profiles_only(problem, false);
	sol.unexplained.resize(M);
	if (N > 0)
		profiles_only.forward(sol.phi, sol.unexplained);
	else
		std::fill(sol.unexplained.begin(), sol.unexplained.end(), 0.);
	for (std::size_t j = 0; j < M; j++)
		sol.unexplained[j] = problem.y[j] - sol.unexplained[j];

	sol.residual = sol.unexplained;
	if (sol.branch == Branch::profiles_plus_blobs) {
		std::vector<double> psi(N + K, 0.);
		std::copy(sol.c.begin(), sol.c.end(), psi.begin() + N);
		SeudoOperator chi(problem, true);
		std::vector<double> blobs(M);
		chi.forward(psi, blobs);
		for (std::size_t j = 0; j < M; j++)
			sol.residual[j] -= blobs[j];
	}
	return sol;
}

} // namespace seudo
