#pragma once

// Per-frame robust activation estimate. A frame y is explained by the known
// profiles X with activations phi, optionally plus a sparse combination W c
// of small Gaussian bumps that stand in for fluorescence from cells not in X:
//
//   min over phi, c >= 0 of
//     min( ||y - X phi||^2,
//          ||y - X phi - W c||^2 + lambda ||c||_1 + gamma )
//
// chi = [X, W] is never stored densely. The bump part is applied by stamping
// one shared truncated-Gaussian stencil at each grid center.

#include <optional>
#include <span>
#include <vector>

#include "seudo/common.hpp"
#include "seudo/optimizer.hpp"

namespace seudo {

class ThreadPool;

struct StencilEntry
{
	int drow = 0;
	int dcol = 0;
	double value = 0.;
};

struct KernelGrid
{
	FrameGeometry geometry;
	int radius = 0;
	int stride = 0;
	double sigma = 0.;
	// (row, col) of each bump center; bump k is coefficient N + k in psi.
	std::vector<std::pair<int, int>> centers;
	// Gaussian exp(-d^2 / 2 sigma^2) sampled on pixels with d <= radius.
	std::vector<StencilEntry> stencil;

	std::size_t size() const { return centers.size(); }

	// Dense image of bump k, for tests and visualization.
	Image bump_image(std::size_t k) const;
};

// Regular lattice of centers spaced by `stride`, centered in the frame.
// sigma <= 0 selects radius / 2. Throws Error("coverage gap") when some
// pixel is farther than `radius` from every center.
KernelGrid build_kernel_grid(FrameGeometry geometry, int radius, int stride, double sigma = 0.);

struct SeudoProblem
{
	FrameGeometry geometry;
	std::vector<double> y;
	// Known profiles, in this frame's pixel coordinates.
	std::vector<Footprint> profiles;
	// Optional; without a grid only the profiles-only branch exists.
	const KernelGrid *grid = nullptr;
	// l1 weight on the bump coefficients c (never on phi).
	double lambda = 0.;
	// Penalty added to the profiles-plus-bumps branch.
	double gamma = 0.;

	std::size_t num_profiles() const { return profiles.size(); }
	std::size_t num_kernels() const { return grid ? grid->size() : 0; }
	std::size_t dim() const { return num_profiles() + num_kernels(); }
};

// chi = [X, W] as a linear operator. With include_kernels = false only the X
// columns exist. A thread pool, when given, splits the forward pass into row
// bands and the adjoint pass into ranges of dimensions.
class SeudoOperator : public LinearOperator
{
public:
	SeudoOperator(const SeudoProblem &problem, bool include_kernels, ThreadPool *pool = nullptr);

	std::size_t rows() const override { return geometry_.pixels(); }
	std::size_t cols() const override { return n_ + k_; }

	void forward(std::span<const double> x, std::span<double> out) const override;
	void adjoint(std::span<const double> v, std::span<double> out) const override;
	void abs_forward(std::span<const double> x, std::span<double> out) const override;
	void abs_adjoint(std::span<const double> v, std::span<double> out) const override;

private:
	struct Entry
	{
		std::size_t index;
		double weight;
	};

	void forwardRows(std::span<const double> x, std::span<double> out, int row0, int row1, bool absolute) const;
	void adjointRange(std::span<const double> v, std::span<double> out, std::size_t d0, std::size_t d1, bool absolute) const;
	void forwardImpl(std::span<const double> x, std::span<double> out, bool absolute) const;
	void adjointImpl(std::span<const double> v, std::span<double> out, bool absolute) const;

	FrameGeometry geometry_;
	std::size_t n_;
	std::size_t k_;
	const KernelGrid *grid_;
	ThreadPool *pool_;
	// Profile entries as linear pixel indices, sorted per profile.
	std::vector<std::vector<Entry>> profiles_;
};

// out = X phi + W c for psi = [phi, c].
std::vector<double> apply_forward(const SeudoProblem &problem, std::span<const double> psi);

struct CostGradient
{
	double cost = 0.;
	std::vector<double> grad;
};

// Pass 1 forms the residual v = y - chi psi pixel by pixel; pass 2 forms
// d/dpsi_m = -2 sum_j chi_jm v_j dimension by dimension. The l1 part adds
// lambda * sign(c) with sign(0) = 0.
CostGradient gradient_two_pass(const SeudoProblem &problem, std::span<const double> psi, ThreadPool *pool = nullptr);

enum class Branch
{
	profiles_only,
	profiles_plus_blobs,
};

struct SeudoSolution
{
	std::vector<double> phi;
	std::vector<double> c;
	// y - X phi - W c
	std::vector<double> residual;
	// y - X phi: what the known profiles leave unexplained, bumps included.
	std::vector<double> unexplained;
	Branch branch = Branch::profiles_only;
	// Objective values of the two branches; the bump branch includes gamma.
	// When the bump branch was provably unable to win it is not solved and
	// its value is reported as the lower bound gamma.
	double profiles_only_value = 0.;
	double profiles_plus_blobs_value = 0.;
	bool blobs_evaluated = false;
	int iterations = 0;

	double value() const
	{
		return branch == Branch::profiles_only ? profiles_only_value : profiles_plus_blobs_value;
	}
};

struct SeudoSolveOptions
{
	SolverConfig solver;
	ThreadPool *pool = nullptr;
};

// warm_start, when given, is a previous psi of length N + K (or N).
SeudoSolution seudo_solve(const SeudoProblem &problem, std::optional<std::span<const double>> warm_start = std::nullopt, const SeudoSolveOptions &options = {});

} // namespace seudo
