#include "seudo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>

#include "json.hpp"
#include "seudo/frame_pipeline.hpp"
#include "seudo/seudo_model.hpp"

namespace seudo {

double MatchReport::mean_hit_correlation() const
{
	if (pairs.empty())
		return 0.;
	double s = 0.;
	for (const auto &p : pairs)
		s += p.correlation;
	return s / double(pairs.size());
}

double footprint_overlap(const Footprint &a, const Footprint &b)
{
	std::size_t i = 0, j = 0, common = 0;
	while (i < a.size() && j < b.size()) {
		if (pixel_less(a[i], b[j]))
			i++;
		else if (pixel_less(b[j], a[i]))
			j++;
		else {
			common++;
			i++;
			j++;
		}
	}
	std::size_t m = std::min(a.size(), b.size());
	return m ? double(common) / double(m) : 0.;
}

MatchReport match_cells(const std::vector<FoundCell> &found, const GroundTruth &truth, const MatchThresholds &th)
{
	const std::size_t T = truth.traces.empty() ? 0 : truth.traces[0].size();
	std::vector<MatchPair> cand;
	for (std::size_t f = 0; f < found.size(); f++) {
		std::vector<double> tr = found[f].trace;
		tr.resize(std::max(T, tr.size()), 0.);
		for (std::size_t k = 0; k < truth.cells.size(); k++) {
			double ov = footprint_overlap(found[f].footprint, truth.cells[k].footprint);
			if (ov < th.min_overlap)
				continue;
			std::vector<double> truth_tr = truth.traces[k];
			truth_tr.resize(tr.size(), 0.);
			double corr = pearson(tr, truth_tr);
			cand.push_back({f, k, ov, corr, corr >= th.strong_corr});
		}
	}
	// Ties broken by indices so the result does not depend on sort stability.
	std::sort(cand.begin(), cand.end(), [](const MatchPair &a, const MatchPair &b) {
		if (a.correlation != b.correlation)
			return a.correlation > b.correlation;
		return a.found != b.found ? a.found < b.found : a.truth < b.truth;
	});

	MatchReport rep;
	rep.found_to_truth.assign(found.size(), -1);
	std::vector<char> truth_used(truth.cells.size(), 0);
	for (const auto &p : cand) {
		if (p.correlation < th.weak_corr)
			break;
		if (rep.found_to_truth[p.found] >= 0 || truth_used[p.truth])
			continue;
		rep.found_to_truth[p.found] = int(p.truth);
		truth_used[p.truth] = 1;
		rep.pairs.push_back(p);
		if (p.strong)
			rep.strong_hits++;
		else
			rep.weak_hits++;
	}
	for (int t : rep.found_to_truth)
		if (t < 0)
			rep.false_alarms++;
	rep.misses = int(truth.cells.size()) - rep.strong_hits - rep.weak_hits;
	return rep;
}

namespace {

// [begin, end) runs where flag is set.
std::vector<std::pair<std::size_t, std::size_t>> runs(const std::vector<char> &flag)
{
	std::vector<std::pair<std::size_t, std::size_t>> out;
	std::size_t t = 0;
	while (t < flag.size()) {
		if (!flag[t]) {
			t++;
			continue;
		}
		std::size_t b = t;
		while (t < flag.size() && flag[t])
			t++;
		out.push_back({b, t});
	}
	return out;
}

double clamp01(double v)
{
	return std::isfinite(v) ? std::clamp(v, 0., 1.) : 0.;
}

} // namespace

TransientReport transient_metrics(const std::vector<double> &found, const std::vector<double> &truth, const std::vector<char> &contaminant, const std::vector<double> &false_reference, const TransientOptions &options)
{
	const std::size_t T = truth.size();
	if (found.size() != T || contaminant.size() != T || false_reference.size() != T)
		throw Error("transient_metrics needs aligned traces");
	TransientReport rep;
	if (T == 0)
		return rep;

	double threshold;
	if (options.threshold) {
		threshold = *options.threshold;
	} else {
		double med = median_of(found);
		std::vector<double> dev(T);
		for (std::size_t t = 0; t < T; t++)
			dev[t] = std::abs(found[t] - med);
		threshold = med + options.k_mad * 1.4826 * median_of(dev);
	}

	const double tmax = *std::max_element(truth.begin(), truth.end());
	std::vector<char> real(T), fake(T), hit(T);
	for (std::size_t t = 0; t < T; t++) {
		real[t] = tmax > 0. && truth[t] > options.truth_level_fraction * tmax;
		fake[t] = contaminant[t] && !real[t];
		hit[t] = found[t] > threshold;
	}
	auto window_rate = [&](const std::vector<char> &flag) {
		auto w = runs(flag);
		if (w.empty())
			return 0.;
		int n = 0;
		for (auto [b, e] : w)
			if (std::any_of(hit.begin() + b, hit.begin() + e, [](char h) { return h; }))
				n++;
		return double(n) / double(w.size());
	};
	rep.tpr = window_rate(real);
	rep.fpr = window_rate(fake);

	double kept = 0., total = 0., leak = 0., ref = 0.;
	for (std::size_t t = 0; t < T; t++) {
		if (real[t]) {
			kept += std::max(found[t], 0.);
			total += truth[t];
		}
		if (fake[t]) {
			leak += std::max(found[t], 0.);
			ref += std::max(false_reference[t], 0.);
		}
	}
	rep.kept_real_fluorescence = total > 0. ? clamp01(kept / total) : 0.;
	rep.kept_false_fluorescence = ref > 0. ? clamp01(leak / ref) : 0.;
	return rep;
}

OverlapScenarioResult run_overlap_scenario(const OverlapScenario &sc)
{
	if (sc.frames_per_phase < 1 || sc.size < 16 || !(sc.amplitude > 0.))
		throw Error("overlap scenario needs frames_per_phase >= 1, size >= 16 and a positive amplitude");
	SyntheticConfig gc;
	gc.width = gc.height = sc.size;
	gc.n_cells = 2;
	gc.overlap_fraction = sc.overlap;
	gc.frames = 1;
	gc.seed = sc.seed;
	GroundTruth gt = generate(gc);
	const Footprint &A = gt.cells[0].footprint;
	const Footprint &U = gt.cells[1].footprint;
	const FrameGeometry geo{sc.size, sc.size};
	KernelGrid grid = build_kernel_grid(geo, sc.kernel_radius, sc.kernel_stride);

	const std::size_t P = std::size_t(sc.frames_per_phase), T = 3 * P;
	std::vector<double> ta(T, 0.), tu(T, 0.);
	for (std::size_t t = 0; t < P; t++) {
		double k = sc.amplitude * calcium_kernel(double(t) + 1., gc.rise_tau, gc.decay_tau / 2.);
		ta[t] = k;
		tu[P + t] = k;
		ta[2 * P + t] = k;
		tu[2 * P + t] = k;
	}

	std::seed_seq seq{std::uint32_t(sc.seed), std::uint32_t(sc.seed >> 32), 77u};
	std::mt19937_64 rng(seq);
	std::normal_distribution<double> nd(0., sc.noise_sigma > 0. ? sc.noise_sigma : 1.);
	OverlapScenarioResult res;
	res.truth = ta;
	res.robust_trace.resize(T);
	res.nnls_trace.resize(T);
	std::vector<char> cont(T);
	for (std::size_t t = 0; t < T; t++) {
		SeudoProblem p;
		p.geometry = geo;
		p.y.assign(geo.pixels(), 0.);
		for (const auto &px : A)
			p.y[std::size_t(px.row) * sc.size + px.col] += ta[t] * px.weight;
		for (const auto &px : U)
			p.y[std::size_t(px.row) * sc.size + px.col] += tu[t] * px.weight;
		if (sc.noise_sigma > 0.)
			for (double &v : p.y)
				v += nd(rng);
		p.profiles = {A};
		p.grid = &grid;
		p.lambda = sc.lambda;
		p.gamma = sc.gamma;
		res.robust_trace[t] = seudo_solve(p).phi[0];
		p.grid = nullptr;
		res.nnls_trace[t] = seudo_solve(p).phi[0];
		cont[t] = tu[t] > 0.1 * sc.amplitude && ta[t] <= 0.1 * sc.amplitude;
	}
	res.robust = transient_metrics(res.robust_trace, ta, cont, res.nnls_trace);
	for (std::size_t t = 0; t < T; t++)
		if (cont[t]) {
			res.robust_false_energy += std::max(res.robust_trace[t], 0.);
			res.nnls_false_energy += std::max(res.nnls_trace[t], 0.);
		}
	return res;
}

ThroughputReport measure_throughput(const std::vector<Image> &frames, const EngineConfig &config, std::size_t warmup)
{
	ThroughputReport rep;
	if (frames.empty())
		return rep;
	Engine engine(frames[0].geometry(), config);
	using clock = std::chrono::steady_clock;
	double wall = 0.;
	std::clock_t cpu0 = 0;
	for (std::size_t t = 0; t < frames.size(); t++) {
		if (t == warmup)
			cpu0 = std::clock();
		auto t0 = clock::now();
		engine.push_frame(frames[t]);
		double dt = std::chrono::duration<double>(clock::now() - t0).count();
		if (t >= warmup) {
			rep.latencies.push_back(dt);
			wall += dt;
		}
	}
	rep.frames = rep.latencies.size();
	if (rep.frames > 0) {
		rep.fps_mean = wall > 0. ? double(rep.frames) / wall : 0.;
		rep.cpu_seconds_per_frame = double(std::clock() - cpu0) / CLOCKS_PER_SEC / double(rep.frames);
	}
	rep.cells = engine.snapshot().profiles.size();
	return rep;
}

std::string match_report_json(const MatchReport &r)
{
	nlohmann::json pairs = nlohmann::json::array();
	for (const auto &p : r.pairs)
		pairs.push_back({{"found", p.found}, {"truth", p.truth}, {"overlap", p.overlap}, {"correlation", p.correlation}, {"strong", p.strong}});
	nlohmann::json doc = {
		{"strong_hits", r.strong_hits},
		{"weak_hits", r.weak_hits},
		{"false_alarms", r.false_alarms},
		{"misses", r.misses},
		{"mean_hit_correlation", r.mean_hit_correlation()},
		{"pairs", pairs},
	};
	return doc.dump(2);
}

std::string match_pairs_csv(const MatchReport &r)
{
	std::string out = "found,truth,overlap,correlation,strong\n";
	char buf[160];
	for (const auto &p : r.pairs) {
		std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%d\n", p.found, p.truth, p.overlap, p.correlation, p.strong ? 1 : 0);
		out += buf;
	}
	return out;
}

} // namespace seudo
