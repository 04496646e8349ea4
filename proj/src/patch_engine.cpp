#include "seudo/patch_engine.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace seudo {

PatchLayout partition(FrameGeometry frame, int patch_size, int margin)
{
	if (patch_size < 16)
		throw Error("patch_size must be >= 16");
	if (margin < 0)
		throw Error("margin must be >= 0");
	if (frame.width < 1 || frame.height < 1)
		throw Error("frame dimensions must be positive");
	PatchLayout L;
	L.frame = frame;
	L.patch_size = patch_size;
	L.margin = margin;
	L.rows = (frame.height + patch_size - 1) / patch_size;
	L.cols = (frame.width + patch_size - 1) / patch_size;
	for (int r = 0; r < L.rows; r++)
		for (int c = 0; c < L.cols; c++) {
			Patch p;
			p.grid_row = r;
			p.grid_col = c;
			p.core.row = r * patch_size;
			p.core.col = c * patch_size;
			p.core.height = std::min(patch_size, frame.height - p.core.row);
			p.core.width = std::min(patch_size, frame.width - p.core.col);
			const int r0 = std::max(0, p.core.row - margin), c0 = std::max(0, p.core.col - margin);
			const int r1 = std::min(frame.height, p.core.row + p.core.height + margin);
			const int c1 = std::min(frame.width, p.core.col + p.core.width + margin);
			p.region = {r0, c0, r1 - r0, c1 - c0};
			const Rect &g = p.region;
			p.perimeter = {
				{g.row, g.col, 1, g.width},
				{g.row + g.height - 1, g.col, 1, g.width},
				{g.row, g.col, g.height, 1},
				{g.row, g.col + g.width - 1, g.height, 1},
			};
			L.patches.push_back(p);
		}
	return L;
}

std::vector<Seam> seams(const PatchLayout &L)
{
	std::vector<Seam> out;
	for (int r = 0; r < L.rows; r++)
		for (int c = 0; c < L.cols; c++) {
			const std::size_t i = std::size_t(r) * L.cols + c;
			if (c + 1 < L.cols)
				out.push_back({i, i + 1, true});
			if (r + 1 < L.rows)
				out.push_back({i, i + std::size_t(L.cols), false});
		}
	return out;
}

Footprint seam_restriction(const Footprint &fp, const PatchLayout &L, const Seam &seam, bool side_a)
{
	const Patch &pa = L.patches[seam.a], &pb = L.patches[seam.b];
	Footprint out;
	if (L.margin == 0) {
		const Patch &p = side_a ? pa : pb;
		// Line of the patch that touches the other side.
		const int line = seam.vertical ? (side_a ? p.region.col + p.region.width - 1 : p.region.col)
					       : (side_a ? p.region.row + p.region.height - 1 : p.region.row);
		for (const auto &px : fp) {
			if (seam.vertical && px.col == line)
				out.push_back({px.row, 0, px.weight});
			else if (!seam.vertical && px.row == line)
				out.push_back({0, px.col, px.weight});
		}
	} else {
		const int r0 = std::max(pa.region.row, pb.region.row), c0 = std::max(pa.region.col, pb.region.col);
		const int r1 = std::min(pa.region.row + pa.region.height, pb.region.row + pb.region.height);
		const int c1 = std::min(pa.region.col + pa.region.width, pb.region.col + pb.region.width);
		const Rect shared{r0, c0, r1 - r0, c1 - c0};
		for (const auto &px : fp)
			if (shared.contains(px.row, px.col))
				out.push_back(px);
	}
	return out;
}

const char *tier_name(MatchTier tier)
{
	switch (tier) {
	case MatchTier::bidirectional:
		return "bidirectional";
	case MatchTier::spatial_sym_temporal_asym:
		return "spatial_sym_temporal_asym";
	case MatchTier::asymmetric:
		return "asymmetric";
	}
	return "?";
}

void GlueConfig::validate() const
{
	for (double v : {tau_glue, tau_corr, tau_same, active_fraction, temporal_containment})
		if (!(v >= 0. && v <= 1.))
			throw Error("glue thresholds must lie in [0, 1]");
	if (tau_glue > tau_same)
		throw Error("tau_glue must not exceed tau_same");
	if (min_common_active < 2)
		throw Error("min_common_active must be >= 2");
}

namespace {

std::vector<char> active_frames(const std::vector<double> &trace, double fraction)
{
	double mx = 0.;
	for (double v : trace)
		mx = std::max(mx, v);
	std::vector<char> on(trace.size(), 0);
	if (mx > 0.)
		for (std::size_t t = 0; t < trace.size(); t++)
			on[t] = trace[t] > fraction * mx;
	return on;
}

} // namespace

std::optional<BorderMatch> match_across_patches(const BorderProfile &a, const BorderProfile &b, const PatchLayout &layout, const Seam &seam, const GlueConfig &cfg)
{
	Footprint ra = seam_restriction(a.pixels, layout, seam, true);
	Footprint rb = seam_restriction(b.pixels, layout, seam, false);
	normalize_footprint(ra);
	normalize_footprint(rb);
	if (ra.empty() || rb.empty())
		return std::nullopt;
	PairScore ps;
	try {
		ps = pair_score(ra, rb);
	} catch (const Error &) {
		return std::nullopt;
	}
	BorderMatch m;
	m.profile_a = a.id;
	m.profile_b = b.id;
	m.rho_ab = ps.rho_AB;
	m.rho_ba = ps.rho_BA;
	m.spatial_score = std::max(ps.rho_AB, ps.rho_BA);
	if (m.spatial_score < cfg.tau_glue)
		return std::nullopt;
	const bool spatial_sym = std::min(ps.rho_AB, ps.rho_BA) >= cfg.tau_same;

	const std::size_t T = std::min(a.trace.size(), b.trace.size());
	std::vector<double> ta(a.trace.begin(), a.trace.begin() + T), tb(b.trace.begin(), b.trace.begin() + T);
	auto on_a = active_frames(ta, cfg.active_fraction), on_b = active_frames(tb, cfg.active_fraction);
	std::vector<double> wa, wb;
	int n_a = 0, n_b = 0, common = 0;
	for (std::size_t t = 0; t < T; t++) {
		n_a += on_a[t];
		n_b += on_b[t];
		common += on_a[t] && on_b[t];
		if (on_a[t] || on_b[t]) {
			wa.push_back(ta[t]);
			wb.push_back(tb[t]);
		}
	}
	bool temporal_sym = false;
	if (common >= cfg.min_common_active) {
		m.temporal_defined = true;
		m.temporal_score = pearson(wa, wb);
		if (m.temporal_score < cfg.tau_corr)
			return std::nullopt;
		temporal_sym = double(common) >= cfg.temporal_containment * n_a && double(common) >= cfg.temporal_containment * n_b;
	} else if (!spatial_sym) {
		// Without temporal evidence only a symmetric spatial match is trusted.
		return std::nullopt;
	}

	if (spatial_sym && m.temporal_defined)
		m.tier = temporal_sym ? MatchTier::bidirectional : MatchTier::spatial_sym_temporal_asym;
	else
		m.tier = MatchTier::asymmetric;
	return m;
}

void PatchEngineConfig::validate() const
{
	pipeline.validate();
	glue.validate();
	if (patch_size < 16)
		throw Error("patch_size must be >= 16");
	if (margin < 0)
		throw Error("margin must be >= 0");
	if (threads < 0)
		throw Error("threads must be >= 0");
}

PatchEngine::PatchEngine(FrameGeometry frame, PatchEngineConfig config)
	: frame_(frame), config_(std::move(config))
{
	config_.validate();
	layout_ = partition(frame, config_.patch_size, config_.margin);
	seams_ = seams(layout_);
	std::size_t n = config_.threads > 0 ? std::size_t(config_.threads) : std::max(1u, std::thread::hardware_concurrency());
	pool_ = std::make_unique<ThreadPool>(n);
	// A single patch uses the workers inside its solves instead.
	ThreadPool *inner = layout_.patches.size() == 1 ? pool_.get() : nullptr;
	for (const auto &p : layout_.patches)
		pipelines_.push_back(std::make_unique<PatchPipeline>(FrameGeometry{p.region.width, p.region.height}, config_.pipeline, inner));
}

ProfileId PatchEngine::global_of(const LocalKey &key)
{
	auto it = global_.find(key);
	if (it != global_.end())
		return it->second;
	// With one patch the local ids are already global.
	ProfileId id = layout_.patches.size() == 1 ? key.second : next_global_++;
	global_[key] = id;
	parent_[id] = id;
	return id;
}

ProfileId PatchEngine::root(ProfileId id) const
{
	for (;;) {
		auto it = parent_.find(id);
		if (it == parent_.end() || it->second == id)
			return id;
		id = it->second;
	}
}

void PatchEngine::unite(ProfileId a, ProfileId b)
{
	a = root(a);
	b = root(b);
	if (a == b)
		return;
	// The smaller id survives, so results do not depend on union order.
	if (b < a)
		std::swap(a, b);
	parent_[b] = a;
}

Footprint PatchEngine::to_frame(std::size_t patch, const Footprint &local) const
{
	const Rect &g = layout_.patches[patch].region;
	Footprint out = local;
	for (auto &px : out) {
		px.row += g.row;
		px.col += g.col;
	}
	return out;
}

EngineFrame PatchEngine::process(const Image &frame)
{
	if (!(frame.geometry() == frame_))
		throw Error("frame geometry does not match the engine");
	const std::size_t P = pipelines_.size();
	std::vector<FrameOutput> outs(P);
	auto errors = pool_->parallel_for(P, [&](std::size_t i) {
		const Rect &g = layout_.patches[i].region;
		Image sub(g.width, g.height);
		for (int r = 0; r < g.height; r++)
			for (int c = 0; c < g.width; c++)
				sub.at(r, c) = frame.at(g.row + r, g.col + c);
		outs[i] = pipelines_[i]->process(sub);
	});

	EngineFrame ef;
	ef.frame_index = frames_;
	for (std::size_t i = 0; i < P; i++) {
		if (errors[i]) {
			ef.failed = true;
			try {
				std::rethrow_exception(errors[i]);
			} catch (const std::exception &e) {
				ef.errors.push_back("patch " + std::to_string(i) + ": " + e.what());
			}
			continue;
		}
		if (outs[i].failed) {
			ef.failed = true;
			ef.errors.push_back("patch " + std::to_string(i) + ": " + outs[i].error);
		}
	}

	// Ids first, in a fixed order, then unions from local merges.
	for (std::size_t i = 0; i < P; i++) {
		for (const auto &e : outs[i].events)
			global_of({i, e.profile_id});
		for (const auto &ch : outs[i].changes) {
			global_of({i, ch.survivor});
			if (ch.kind == ChangeKind::merged)
				unite(global_of({i, ch.survivor}), global_of({i, ch.absorbed}));
		}
		for (const auto &p : pipelines_[i]->profiles().stables())
			global_of({i, p.id});
	}
	glue_seams();

	std::map<ProfileId, DetectionEvent> merged;
	for (std::size_t i = 0; i < P; i++)
		for (const auto &e : outs[i].events) {
			const ProfileId g = root(global_of({i, e.profile_id}));
			auto [it, fresh] = merged.try_emplace(g, DetectionEvent{e.frame_index, g, e.phi, e.kind});
			if (!fresh) {
				it->second.phi = std::max(it->second.phi, e.phi);
				if (e.kind == EventKind::stable)
					it->second.kind = EventKind::stable;
			}
		}
	for (auto &[g, e] : merged)
		ef.events.push_back(e);
	frames_++;
	return ef;
}

void PatchEngine::glue_seams()
{
	for (const auto &seam : seams_) {
		const auto &sa = pipelines_[seam.a]->profiles().stables();
		const auto &sb = pipelines_[seam.b]->profiles().stables();
		if (sa.empty() || sb.empty())
			continue;
		std::vector<BorderProfile> ba, bb;
		auto collect = [&](std::size_t patch, const std::vector<Profile> &set, bool side_a, std::vector<BorderProfile> &out) {
			const auto &traces = pipelines_[patch]->traces();
			for (const auto &p : set) {
				Footprint fp = to_frame(patch, p.pixels);
				if (seam_restriction(fp, layout_, seam, side_a).empty())
					continue;
				auto it = traces.find(p.id);
				out.push_back({p.id, std::move(fp), it != traces.end() ? it->second : std::vector<double>{}});
			}
		};
		collect(seam.a, sa, true, ba);
		collect(seam.b, sb, false, bb);
		for (const auto &x : ba)
			for (const auto &y : bb) {
				const ProfileId gx = global_of({seam.a, x.id}), gy = global_of({seam.b, y.id});
				if (root(gx) == root(gy))
					continue;
				auto m = match_across_patches(x, y, layout_, seam, config_.glue);
				if (!m)
					continue;
				m->profile_a = gx;
				m->profile_b = gy;
				matches_.push_back(*m);
				unite(gx, gy);
			}
	}
}

std::vector<GlobalProfile> PatchEngine::profiles() const
{
	std::map<ProfileId, GlobalProfile> groups;
	for (std::size_t i = 0; i < pipelines_.size(); i++)
		for (const auto &p : pipelines_[i]->profiles().stables()) {
			auto it = global_.find({i, p.id});
			if (it == global_.end())
				continue;
			const ProfileId g = root(it->second);
			auto &gp = groups[g];
			gp.id = g;
			gp.members.push_back({i, p.id});
			Footprint fp = to_frame(i, p.pixels);
			gp.pixels.insert(gp.pixels.end(), fp.begin(), fp.end());
		}
	std::vector<GlobalProfile> out;
	for (auto &[g, gp] : groups) {
		normalize_footprint(gp.pixels);
		out.push_back(std::move(gp));
	}
	return out;
}

std::map<ProfileId, std::vector<double>> PatchEngine::traces() const
{
	std::map<ProfileId, std::vector<double>> out;
	const std::size_t T = std::size_t(frames_);
	for (const auto &gp : profiles()) {
		std::vector<double> tr(T, 0.);
		bool first = true;
		for (const auto &[i, id] : gp.members) {
			const auto &all = pipelines_[i]->traces();
			auto it = all.find(id);
			if (it == all.end())
				continue;
			for (std::size_t t = 0; t < T && t < it->second.size(); t++)
				tr[t] = first ? it->second[t] : std::max(tr[t], it->second[t]);
			first = false;
		}
		out[gp.id] = std::move(tr);
	}
	return out;
}

} // namespace seudo
