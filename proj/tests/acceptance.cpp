// Acceptance checks. One PASS/FAIL line per criterion; exits non-zero when any
// hard criterion fails. Soft criteria print SOFT when below target but above
// their failure floor.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>

#include "footprint_oracles.hpp"
#include "model_oracles.hpp"
#include "oracles.hpp"
#include "seudo/engine.hpp"
#include "seudo/eval.hpp"
#include "seudo/frame_pipeline.hpp"
#include "seudo/optimizer.hpp"
#include "seudo/synthetic.hpp"

using namespace seudo;

namespace {

// Tolerances.
constexpr int solver_instances = 100;
constexpr double solver_rel_tol = 1e-4;
constexpr double solver_seconds = 10.;
constexpr int gradient_instances = 100;
constexpr double gradient_dense_tol = 1e-10;
constexpr double gradient_fd_tol = 1e-5;
constexpr double real_energy_min = 0.9;
constexpr double false_energy_max = 0.3;
constexpr int e2e_strong_min = 13;
constexpr int e2e_false_alarms_max = 2;
constexpr double e2e_correlation_min = 0.9;
constexpr double e2e_seconds = 60.;
constexpr int latency_frames = 3;
constexpr double interior_overlap_min = 0.8;
constexpr double interior_correlation_min = 0.95;
constexpr int seam_min = 18;
constexpr double fps_target = 30.;
constexpr double fps_floor = 20.;
constexpr int pair_trials = 10000;
constexpr double rho_slack = 1e-9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
	return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
	enum Kind
	{
		pass,
		soft,
		fail,
	} kind;
	std::string detail;
};

int hard_failures = 0;

void report(const char *name, const std::function<Outcome()> &check)
{
	const auto t0 = Clock::now();
	Outcome o;
	try {
		o = check();
	} catch (const std::exception &e) {
		o = {Outcome::fail, std::string("exception: ") + e.what()};
	}
	const char *tag = o.kind == Outcome::pass ? "PASS" : o.kind == Outcome::soft ? "SOFT" : "FAIL";
	if (o.kind == Outcome::fail)
		hard_failures++;
	std::printf("%s %-24s %s [%.1fs]\n", tag, name, o.detail.c_str(), seconds_since(t0));
	std::fflush(stdout);
}

std::string fmt(const char *f, auto... args)
{
	char buf[512];
	std::snprintf(buf, sizeof buf, f, args...);
	return buf;
}

Outcome verdict(bool ok, std::string detail)
{
	return {ok ? Outcome::pass : Outcome::fail, std::move(detail)};
}

// Runs a video through an engine, returning the per-frame outputs.
std::vector<EngineFrame> stream(Engine &e, const GroundTruth &gt, double scale = 1.)
{
	std::vector<EngineFrame> out;
	out.reserve(gt.video.size());
	for (std::size_t t = 0; t < gt.video.size(); t++) {
		Image f = gt.frame(t);
		if (scale != 1.)
			for (double &v : f.pixels)
				v *= scale;
		out.push_back(e.push_frame(f));
	}
	return out;
}

MatchReport score(const Engine &e, const GroundTruth &gt)
{
	auto snap = e.snapshot();
	std::vector<FoundCell> found;
	for (const auto &p : snap.profiles)
		found.push_back({p.id, p.pixels, snap.traces[p.id]});
	return match_cells(found, gt);
}

Outcome solver_oracle()
{
	std::mt19937_64 rng(101);
	std::uniform_int_distribution<int> dims(2, 50);
	std::uniform_real_distribution<double> lam(0.01, 2.);
	double worst = -1e300, solver_time = 0.;
	int bad = 0;
	for (int i = 0; i < solver_instances; i++) {
		const std::size_t n = std::size_t(dims(rng));
		auto inst = oracle::random_lasso(rng, n + 10, n, lam(rng));
		const double ref = oracle::lasso_cost(inst.m, inst.y, inst.w, oracle::cd_nonneg_lasso(inst.m, inst.y, inst.w));
		DenseOperator chi(inst.m.rows, inst.m.cols, inst.m.a);
		const auto t0 = Clock::now();
		auto obj = least_squares_objective(chi, inst.y, inst.w);
		auto res = solve(obj, std::vector<double>(n, 0.), estimate_lipschitz_per_dimension(obj, chi));
		solver_time += seconds_since(t0);
		const double gap = (res.report.final_cost - ref) / std::max(std::fabs(ref), 1e-300);
		worst = std::max(worst, gap);
		if (gap > solver_rel_tol)
			bad++;
	}
	return verdict(bad == 0 && solver_time < solver_seconds,
	               fmt("%d/%d within %.0e relative (worst %.2e), solver time %.2fs", solver_instances - bad, solver_instances, solver_rel_tol, worst, solver_time));
}

Outcome gradient_check()
{
	std::mt19937_64 rng(102);
	const FrameGeometry g{14, 11};
	const auto grid = build_kernel_grid(g, 3, 3);
	double worst_dense = 0., worst_fd = 0.;
	for (int i = 0; i < gradient_instances; i++) {
		auto pb = oracle::random_problem(rng, g, &grid, 1 + i % 4);
		auto psi = oracle::random_psi(rng, pb.dim());
		for (double &v : psi)
			v += 0.5;
		auto cg = gradient_two_pass(pb, psi);
		auto m = oracle::dense_chi(pb);
		auto chipsi = oracle::matvec(m, psi);
		for (std::size_t k = 0; k < m.cols; k++) {
			double d = 0.;
			for (std::size_t j = 0; j < m.rows; j++)
				d += m.at(j, k) * (pb.y[j] - chipsi[j]);
			d = -2. * d + (k >= pb.num_profiles() ? pb.lambda : 0.);
			worst_dense = std::max(worst_dense, std::fabs(cg.grad[k] - d) / std::max(1., std::fabs(d)));
		}
		auto fd = oracle::central_differences([&](const std::vector<double> &p) { return gradient_two_pass(pb, p).cost; }, psi, 1e-4);
		for (std::size_t k = 0; k < fd.size(); k++)
			worst_fd = std::max(worst_fd, std::fabs(cg.grad[k] - fd[k]) / std::max(1., std::fabs(fd[k])));
	}
	return verdict(worst_dense <= gradient_dense_tol && worst_fd <= gradient_fd_tol,
	               fmt("%d instances, worst vs dense %.1e, vs finite differences %.1e", gradient_instances, worst_dense, worst_fd));
}

Outcome false_transient()
{
	int ok = 0, total = 0;
	double worst_real = 1., worst_false = 0.;
	std::string first_bad;
	for (double ov : {0.1, 0.2, 0.3, 0.4, 0.5}) {
		for (int ai = 1; ai <= 10; ai++) {
			OverlapScenario sc;
			sc.overlap = ov;
			sc.amplitude = 2. * ai;
			auto r = run_overlap_scenario(sc);
			const bool pass = r.robust.kept_real_fluorescence >= real_energy_min && r.robust.kept_false_fluorescence <= false_energy_max && r.robust_false_energy < r.nnls_false_energy;
			worst_real = std::min(worst_real, r.robust.kept_real_fluorescence);
			worst_false = std::max(worst_false, r.robust.kept_false_fluorescence);
			total++;
			if (pass)
				ok++;
			else if (first_bad.empty())
				first_bad = fmt(" first failure overlap %.1f amplitude %.0f", ov, sc.amplitude);
		}
	}
	return verdict(ok == total, fmt("%d/%d instances; worst kept real %.3f (>= %.2f), worst kept false %.3f (<= %.2f)%s", ok, total, worst_real, real_energy_min, worst_false, false_energy_max, first_bad.c_str()));
}

Outcome end_to_end()
{
	SyntheticConfig sc;
	sc.width = sc.height = 128;
	sc.frames = 600;
	sc.n_cells = 15;
	sc.snr = 5.;
	sc.seed = 1;
	auto gt = generate(sc);
	EngineConfig cfg;
	cfg.engine.threads = 1;
	cfg.engine.patch_size = 128;
	const auto t0 = Clock::now();
	Engine e(gt.geometry(), cfg);
	stream(e, gt);
	const double secs = seconds_since(t0);
	auto rep = score(e, gt);
	const double corr = rep.mean_hit_correlation();
	return verdict(rep.strong_hits >= e2e_strong_min && rep.false_alarms <= e2e_false_alarms_max && corr >= e2e_correlation_min && secs < e2e_seconds,
	               fmt("strong %d/15, weak %d, false alarms %d, mean hit correlation %.3f, %.1fs single-threaded", rep.strong_hits, rep.weak_hits, rep.false_alarms, corr, secs));
}

Outcome latency()
{
	const DetectConfig detect;
	int worst = -1000, ok = 0;
	const int seeds = 8;
	for (int seed = 1; seed <= seeds; seed++) {
		SyntheticConfig c;
		c.width = c.height = 48;
		c.frames = 200;
		c.centers = {{24, 24}};
		c.n_cells = 1;
		c.amplitude = 8.;
		c.spike_rate = 0.05;
		c.seed = std::uint64_t(seed);
		auto gt = generate(c);
		Engine e(gt.geometry());
		std::int64_t onset = -1, first = -1;
		for (std::size_t t = 0; t < gt.video.size() && first < 0; t++) {
			Image f = gt.frame(t);
			if (onset < 0) {
				std::vector<Image> one{f};
				if (gt.traces[0][t] > detect.k_sigma * estimate_noise(denoise(one, {}), {}).mean_sigma_half())
					onset = std::int64_t(t);
			}
			if (!e.push_frame(f).events.empty())
				first = std::int64_t(t);
		}
		if (onset < 0 || first < 0)
			continue;
		worst = std::max(worst, int(first - onset));
		if (first - onset <= latency_frames)
			ok++;
	}
	return verdict(ok == seeds, fmt("%d/%d planted cells reported within %d frames of onset (worst %+d), empty start, no warm-up", ok, seeds, latency_frames, worst));
}

Outcome patching()
{
	// Interior cells: unpatched and 2x2 runs agree one to one.
	SyntheticConfig c;
	c.width = c.height = 64;
	c.frames = 300;
	c.centers = {{10, 10}, {12, 48}, {46, 16}, {50, 50}, {20, 22}};
	c.n_cells = 5;
	c.seed = 7;
	auto gt = generate(c);
	EngineConfig one_cfg, four_cfg;
	one_cfg.engine.patch_size = 64;
	four_cfg.engine.patch_size = 32;
	Engine one(gt.geometry(), one_cfg), four(gt.geometry(), four_cfg);
	stream(one, gt);
	stream(four, gt);
	auto s1 = one.snapshot(), s4 = four.snapshot();
	int paired = 0;
	for (const auto &a : s1.profiles) {
		int partners = 0;
		for (const auto &b : s4.profiles)
			if (footprint_overlap(a.pixels, b.pixels) >= interior_overlap_min && pearson(s1.traces[a.id], s4.traces[b.id]) > interior_correlation_min)
				partners++;
		paired += partners == 1;
	}
	const bool interior_ok = s1.profiles.size() == gt.cells.size() && s4.profiles.size() == s1.profiles.size() && paired == int(s1.profiles.size());

	// Twenty cells straddling the seams of a 2x2 layout.
	SyntheticConfig sc;
	sc.width = sc.height = 160;
	sc.frames = 600;
	sc.seed = 1;
	for (double r : {8., 22., 36., 50., 64., 96., 110., 124., 138., 152.}) {
		sc.centers.push_back({r, 79.5});
		sc.centers.push_back({79.5, r});
	}
	sc.n_cells = int(sc.centers.size());
	auto sgt = generate(sc);
	EngineConfig seam_cfg;
	seam_cfg.engine.patch_size = 80;
	Engine seam(sgt.geometry(), seam_cfg);
	stream(seam, sgt);
	auto snap = seam.snapshot();
	std::vector<FoundCell> found;
	for (const auto &p : snap.profiles)
		found.push_back({p.id, p.pixels, snap.traces[p.id]});
	auto rep = match_cells(found, sgt);
	int recovered = 0;
	for (std::size_t k = 0; k < sgt.cells.size(); k++) {
		int overlapping = 0;
		for (const auto &p : snap.profiles)
			overlapping += footprint_overlap(p.pixels, sgt.cells[k].footprint) >= 0.3;
		bool strong = false;
		for (const auto &pr : rep.pairs)
			strong |= pr.truth == k && pr.strong;
		recovered += overlapping == 1 && strong;
	}
	return verdict(interior_ok && recovered >= seam_min,
	               fmt("interior: %zu vs %zu profiles, %d/%zu paired one to one; seams: %d/20 cells as one global profile (>= %d)", s1.profiles.size(), s4.profiles.size(), paired, s1.profiles.size(), recovered, seam_min));
}

Outcome scale_invariance()
{
	SyntheticConfig c;
	c.width = c.height = 64;
	c.frames = 300;
	c.n_cells = 8;
	c.spike_rate = 0.03;
	c.seed = 11;
	auto gt = generate(c);
	Engine a(gt.geometry()), b(gt.geometry());
	auto fa = stream(a, gt), fb = stream(b, gt, 100.);
	int differing = 0;
	for (std::size_t t = 0; t < fa.size(); t++) {
		bool same = fa[t].events.size() == fb[t].events.size();
		for (std::size_t k = 0; same && k < fa[t].events.size(); k++)
			same = fa[t].events[k].profile_id == fb[t].events[k].profile_id && fa[t].events[k].kind == fb[t].events[k].kind;
		differing += !same;
	}
	auto ra = score(a, gt), rb = score(b, gt);
	const std::size_t na = a.snapshot().profiles.size(), nb = b.snapshot().profiles.size();
	return verdict(differing == 0 && na == nb && ra.found_to_truth == rb.found_to_truth && ra.strong_hits == rb.strong_hits,
	               fmt("frames with differing events %d, cells %zu vs %zu, strong hits %d vs %d, assignments %s", differing, na, nb, ra.strong_hits, rb.strong_hits, ra.found_to_truth == rb.found_to_truth ? "identical" : "differ"));
}

Outcome throughput()
{
	SyntheticConfig c;
	c.width = c.height = 90;
	c.frames = 310;
	c.n_cells = 25;
	c.seed = 5;
	auto gt = generate(c);
	std::vector<Image> frames;
	for (std::size_t t = 0; t < gt.video.size(); t++)
		frames.push_back(gt.frame(t));
	EngineConfig cfg;
	cfg.engine.patch_size = 90;
	cfg.engine.threads = 0;
	auto r = measure_throughput(frames, cfg, 10);
	const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
	const auto kind = r.fps_mean >= fps_target ? Outcome::pass : r.fps_mean >= fps_floor ? Outcome::soft : Outcome::fail;
	return {kind, fmt("%.1f fps (target %.0f, floor %.0f), %.2f ms cpu/frame, %zu cells, %u hardware threads", r.fps_mean, fps_target, fps_floor, 1e3 * r.cpu_seconds_per_frame, r.cells, hw)};
}

Outcome manager_suites()
{
	using namespace oracle;
	std::mt19937 rng(2024);
	int rho_bad = 0, oracle_bad = 0, idem_bad = 0, split_bad = 0, sym_bad = 0;
	std::map<Action, int> seen;
	for (int t = 0; t < pair_trials; t++) {
		Profile a = make(1, random_blob(rng));
		Profile b = make(2, random_partner(rng, a.pixels));
		PairScore s = pair_score(a, b), o = score_oracle(a.pixels, b.pixels);
		rho_bad += s.rho_AB > 1. + rho_slack || s.rho_BA > 1. + rho_slack || o.rho_AB > 1. + rho_slack || o.rho_BA > 1. + rho_slack;
		oracle_bad += std::fabs(s.alpha_AB - o.alpha_AB) > 1e-12 * std::fabs(o.alpha_AB) || std::fabs(s.rho_BA - std::min(1., o.rho_BA)) > 1e-12;

		idem_bad += !temp_merge_test(a, a) || !(merge_profiles(a, a).pixels == a.pixels);

		Adjudication ab = stable_adjudicate(a, b, s), ba = stable_adjudicate(b, a, pair_score(b, a));
		seen[ab.action]++;
		const Role swapped = ab.contained == Role::a ? Role::b : ab.contained == Role::b ? Role::a : Role::none;
		sym_bad += ab.action != ba.action || ba.contained != swapped;

		auto [kept, rest] = split_profiles(b, a, 1);
		auto before = pixel_set(a.pixels), after = pixel_set(kept.pixels);
		for (auto px : pixel_set(b.pixels))
			before.insert(px);
		if (rest)
			for (auto px : pixel_set(rest->pixels))
				after.insert(px);
		split_bad += before != after;
	}
	// Cascades over finite sets end with no pair left to merge or split.
	int cascade_bad = 0;
	for (int t = 0; t < 300; t++) {
		ProfileManager pm;
		std::vector<Footprint> pool;
		for (int k = 0; k < 12; k++)
			pool.push_back(k > 0 && k % 2 ? random_partner(rng, pool.back()) : random_blob(rng));
		for (auto &fp : pool)
			pm.insert_stable(make(0, fp));
		const auto &st = pm.stables();
		for (std::size_t i = 0; i < st.size(); i++)
			for (std::size_t j = i + 1; j < st.size(); j++)
				if (merge_stats(st[i].pixels, st[j].pixels).C > 0 && stable_adjudicate(st[i], st[j], pair_score(st[i], st[j]), pm.config()).action != Action::keep_separate)
					cascade_bad++;
	}
	const bool all_branches = seen[Action::merge] > 0 && seen[Action::split] > 0 && seen[Action::keep_separate] > 0;
	return verdict(rho_bad + oracle_bad + idem_bad + split_bad + sym_bad + cascade_bad == 0 && all_branches,
	               fmt("%d pairs: rho bound %d, oracle %d, idempotence %d, split conservation %d, symmetry %d, cascade %d violations; merge/split/keep %d/%d/%d",
	                   pair_trials, rho_bad, oracle_bad, idem_bad, split_bad, sym_bad, cascade_bad, seen[Action::merge], seen[Action::split], seen[Action::keep_separate]));
}

} // namespace

int main()
{
	report("solver_oracle", solver_oracle);
	report("gradient", gradient_check);
	report("false_transient", false_transient);
	report("end_to_end", end_to_end);
	report("latency", latency);
	report("patching", patching);
	report("scale_invariance", scale_invariance);
	report("throughput", throughput);
	report("rho_and_merge_suites", manager_suites);
	std::printf("%d hard failure(s)\n", hard_failures);
	return hard_failures == 0 ? 0 : 1;
}
