#include "seudo/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace seudo {

void PipelineConfig::validate() const
{
	if (denoise.window < 1 || denoise.spatial_sigma < 0.)
		throw Error("denoise window must be >= 1 and spatial_sigma >= 0");
	if (sections.rows < 1 || sections.cols < 1)
		throw Error("section grid must be at least 1x1");
	if (detect.min_area < 1 || detect.k_sigma < 0.)
		throw Error("detection min_area must be >= 1 and k_sigma >= 0");
	if (detect.grow_k_sigma && (*detect.grow_k_sigma < 0. || *detect.grow_k_sigma > detect.k_sigma))
		throw Error("grow_k_sigma must be in [0, k_sigma]");
	manager.validate();
	if (kernel_radius < 1 || kernel_stride < 1)
		throw Error("kernel radius and stride must be positive");
	if (!(lambda >= 0. && gamma >= 0. && gamma_detect >= 0.))
		throw Error("lambda, gamma and gamma_detect must be non-negative");
	if (solver.max_iter < 1 || !(solver.tol > 0.))
		throw Error("solver max_iter must be >= 1 and tol > 0");
}

PatchPipeline::PatchPipeline(FrameGeometry geometry, PipelineConfig config, ThreadPool *pool)
	: geometry_(geometry), config_(config), pool_(pool), manager_(config.manager)
{
	config_.validate();
	if (geometry.width < 1 || geometry.height < 1)
		throw Error("patch dimensions must be positive");
	grid_ = build_kernel_grid(geometry, config_.kernel_radius, config_.kernel_stride, config_.kernel_sigma);
}

std::vector<double> &PatchPipeline::trace(ProfileId id)
{
	auto &tr = traces_[id];
	tr.resize(std::size_t(frame_index_) + 1, 0.);
	return tr;
}

void PatchPipeline::apply_changes(const std::vector<ProfileChange> &changes)
{
	for (const auto &ch : changes) {
		switch (ch.kind) {
		case ChangeKind::merged: {
			auto it = traces_.find(ch.absorbed);
			if (it != traces_.end()) {
				auto &dst = trace(ch.survivor);
				for (std::size_t t = 0; t < it->second.size(); t++)
					dst[t] = std::max(dst[t], it->second[t]);
				traces_.erase(it);
			}
			last_phi_.erase(ch.absorbed);
			std::erase(reported_, ch.absorbed);
			break;
		}
		case ChangeKind::discarded:
		case ChangeKind::removed:
			traces_.erase(ch.survivor);
			last_phi_.erase(ch.survivor);
			std::erase(reported_, ch.survivor);
			break;
		case ChangeKind::promoted:
			std::erase(reported_, ch.survivor);
			break;
		case ChangeKind::split:
			break;
		}
	}
}

namespace {

std::vector<Footprint> unit_peak_footprints(const std::vector<Profile> &profiles)
{
	std::vector<Footprint> out;
	out.reserve(profiles.size());
	for (const auto &p : profiles) {
		Footprint fp = p.pixels;
		scale_to_unit_peak(fp);
		out.push_back(std::move(fp));
	}
	return out;
}

Image with_offset(const std::vector<double> &values, const NoiseMap &nm)
{
	Image img(nm.geometry.width, nm.geometry.height);
	for (std::size_t j = 0; j < img.size(); j++)
		img.pixels[j] = values[j] + nm.local_median[j];
	return img;
}

} // namespace

FrameOutput PatchPipeline::process(const Image &frame)
{
	if (!(frame.geometry() == geometry_))
		throw Error("frame geometry does not match the patch");
	FrameOutput out;
	try {
		out = step(frame);
	} catch (const std::exception &e) {
		out = FrameOutput{};
		out.frame_index = frame_index_;
		out.failed = true;
		out.error = e.what();
		for (auto &[id, tr] : traces_)
			tr.resize(std::size_t(frame_index_) + 1, 0.);
	}
	frame_index_++;
	return out;
}

FrameOutput PatchPipeline::step(const Image &frame)
{
	const std::int64_t t = frame_index_;
	FrameOutput out;
	out.frame_index = t;
	for (double v : frame.pixels)
		if (!std::isfinite(v))
			throw Error("frame contains non-finite pixel values");

	history_.push_back(frame);
	while (int(history_.size()) > config_.denoise.window)
		history_.pop_front();
	std::vector<Image> hist(history_.begin(), history_.end());
	Image d = denoise(hist, config_.denoise);

	NoiseMap nm = estimate_noise(d, config_.sections);
	const double s = nm.mean_sigma_half();
	out.sigma_half = s;
	const double lambda = config_.lambda * s;
	const double gamma = config_.gamma * s * s;
	const double detect_level = config_.gamma_detect * s;

	std::vector<double> y(d.size());
	for (std::size_t j = 0; j < y.size(); j++)
		y[j] = d.pixels[j] - nm.local_median[j];

	for (auto &[id, tr] : traces_)
		tr.resize(std::size_t(t) + 1, 0.);

	SeudoSolveOptions opts;
	opts.solver = config_.solver;
	opts.pool = pool_;

	auto solve = [&](const std::vector<Profile> &set, std::vector<double> target, std::vector<double> &last_c) {
		SeudoProblem prob;
		prob.geometry = geometry_;
		prob.y = std::move(target);
		prob.profiles = unit_peak_footprints(set);
		prob.grid = &grid_;
		prob.lambda = lambda;
		prob.gamma = gamma;
		std::vector<double> warm(prob.dim(), 0.);
		for (std::size_t k = 0; k < set.size(); k++) {
			auto it = last_phi_.find(set[k].id);
			if (it != last_phi_.end())
				warm[k] = it->second;
		}
		if (last_c.size() == prob.num_kernels())
			std::copy(last_c.begin(), last_c.end(), warm.begin() + set.size());
		SeudoSolution sol = seudo_solve(prob, std::span<const double>(warm), opts);
		last_c = sol.c;
		for (std::size_t k = 0; k < set.size(); k++)
			last_phi_[set[k].id] = sol.phi[k];
		return sol;
	};

	// Stable profiles.
	std::vector<Profile> stables = manager_.stables();
	SeudoSolution st = solve(stables, y, last_stable_c_);
	for (std::size_t k = 0; k < stables.size(); k++) {
		const ProfileId id = stables[k].id;
		const double phi = st.phi[k];
		trace(id)[t] = phi;
		if (phi > detect_level) {
			manager_.mark_active(id, t, phi);
			out.events.push_back({t, id, phi, EventKind::stable});
		}
	}

	// Temporary profiles on what the stable ones leave.
	std::vector<Profile> temps = manager_.temporaries();
	SeudoSolution tp = solve(temps, st.unexplained, last_temp_c_);
	for (std::size_t k = 0; k < temps.size(); k++) {
		const ProfileId id = temps[k].id;
		const double phi = tp.phi[k];
		trace(id)[t] = phi;
		const bool before = std::find(reported_.begin(), reported_.end(), id) != reported_.end();
		if (phi > detect_level)
			manager_.mark_active(id, t, phi);
		if (phi > detect_level || before) {
			out.events.push_back({t, id, phi, EventKind::early});
			if (!before)
				reported_.push_back(id);
		}
	}

	// New candidates: seeds from the fully unexplained image, grown over the
	// image with only the stable profiles removed.
	Image seeds = with_offset(tp.unexplained, nm);
	if (config_.suppress_near_active) {
		// Structure left around an active stable profile is taken as its shape
		// mismatch, not as a new cell.
		const int W = geometry_.width, H = geometry_.height;
		for (std::size_t k = 0; k < stables.size(); k++) {
			if (!(st.phi[k] > detect_level))
				continue;
			for (const auto &p : stables[k].pixels)
				for (int r = std::max(0, p.row - 1); r <= std::min(H - 1, p.row + 1); r++)
					for (int c = std::max(0, p.col - 1); c <= std::min(W - 1, p.col + 1); c++)
						seeds.at(r, c) = nm.local_median[std::size_t(r) * W + c];
		}
	}
	Image grow = with_offset(st.unexplained, nm);
	auto cands = detect_components(seeds, nm, config_.detect, t, &grow);
	for (auto &cand : cands) {
		const double peak = footprint_peak(cand.pixels);
		auto [id, absorbed] = manager_.add_candidate(std::move(cand.pixels), t, peak);
		std::vector<ProfileChange> merges;
		for (ProfileId a : absorbed)
			merges.push_back({ChangeKind::merged, id, a});
		apply_changes(merges);
		out.changes.insert(out.changes.end(), merges.begin(), merges.end());
		auto &tr = trace(id);
		tr[t] = std::max(tr[t], peak);
		auto ev = std::find_if(out.events.begin(), out.events.end(), [&](const DetectionEvent &e) {
			return e.profile_id == id && e.kind == EventKind::early;
		});
		if (ev == out.events.end())
			out.events.push_back({t, id, tr[t], EventKind::early});
		else
			ev->phi = tr[t];
		if (std::find(reported_.begin(), reported_.end(), id) == reported_.end())
			reported_.push_back(id);
	}
	// Events of temporaries absorbed this frame now belong to the survivor.
	std::erase_if(out.events, [&](const DetectionEvent &e) {
		return e.kind == EventKind::early && !traces_.count(e.profile_id);
	});

	auto promoted = manager_.promote_stale(t);
	apply_changes(promoted);
	out.changes.insert(out.changes.end(), promoted.begin(), promoted.end());
	return out;
}

} // namespace seudo
