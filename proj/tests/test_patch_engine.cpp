#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "seudo/eval.hpp"
#include "seudo/patch_engine.hpp"
#include "seudo/synthetic.hpp"

using namespace seudo;

namespace {

GroundTruth video(int w, int h, std::vector<std::pair<double, double>> centers, int frames = 300, std::uint64_t seed = 1)
{
	SyntheticConfig c;
	c.width = w;
	c.height = h;
	c.frames = frames;
	c.centers = std::move(centers);
	c.n_cells = int(c.centers.size());
	c.spike_rate = 0.03;
	c.seed = seed;
	return generate(c);
}

PatchEngineConfig engine_config(int patch_size, int threads = 1)
{
	PatchEngineConfig c;
	c.patch_size = patch_size;
	c.threads = threads;
	return c;
}

void run(PatchEngine &e, const GroundTruth &gt, std::vector<EngineFrame> *out = nullptr)
{
	for (std::size_t t = 0; t < gt.video.size(); t++) {
		auto f = e.process(gt.frame(t));
		if (out)
			out->push_back(f);
	}
}

std::vector<double> spikes(std::size_t T, double rate, std::uint64_t seed)
{
	std::mt19937 rng{static_cast<unsigned>(seed)};
	std::bernoulli_distribution fire(rate);
	std::vector<double> tr(T, 0.);
	for (std::size_t t = 0; t < T; t++)
		if (fire(rng))
			for (std::size_t k = t; k < std::min(T, t + 12); k++)
				tr[k] += 5. * calcium_kernel(double(k - t) + 1., 1., 4.);
	return tr;
}

// Vertical seam at column 16 between two 16-wide patches.
struct TwoPatches
{
	PatchLayout layout = partition({32, 16}, 16);
	Seam seam = seams(layout).at(0);
};

Footprint column(int col, int r0, int r1, double center, double width)
{
	Footprint fp;
	for (int r = r0; r <= r1; r++)
		fp.push_back({r, col, std::exp(-0.5 * (r - center) * (r - center) / (width * width))});
	return fp;
}

} // namespace

TEST_CASE("partition examples")
{
	auto a = partition({160, 160}, 80);
	CHECK(a.rows == 2);
	CHECK(a.cols == 2);
	auto b = partition({500, 500}, 80);
	CHECK(b.rows == 7);
	CHECK(b.cols == 7);
	CHECK(b.at(6, 6).core == Rect{480, 480, 20, 20});
	CHECK(b.at(0, 6).core.width == 20);
	auto c = partition({90, 90}, 90);
	CHECK(c.rows == 1);
	CHECK(c.cols == 1);
	auto d = partition({40, 30}, 80);
	CHECK(d.patches.size() == 1);
	CHECK(d.at(0, 0).core == Rect{0, 0, 30, 40});
	CHECK_THROWS(partition({100, 100}, 15));
	CHECK_THROWS(partition({100, 100}, 20, -1));
}

TEST_CASE("patches tile the frame exactly")
{
	for (auto [w, h, ps, m] : std::vector<std::tuple<int, int, int, int>>{{160, 160, 80, 0}, {500, 300, 80, 4}, {17, 90, 16, 2}, {123, 45, 40, 0}}) {
		auto L = partition({w, h}, ps, m);
		std::vector<int> hits(std::size_t(w) * h, 0);
		for (const auto &p : L.patches) {
			for (int r = p.core.row; r < p.core.row + p.core.height; r++)
				for (int c = p.core.col; c < p.core.col + p.core.width; c++)
					hits[std::size_t(r) * w + c]++;
			CHECK(p.region.row == std::max(0, p.core.row - m));
			CHECK(p.region.row + p.region.height == std::min(h, p.core.row + p.core.height + m));
			REQUIRE(p.perimeter.size() == 4);
			for (const auto &s : p.perimeter)
				CHECK((s.width == 1 || s.height == 1));
		}
		CHECK(std::all_of(hits.begin(), hits.end(), [](int v) { return v == 1; }));
		CHECK(seams(L).size() == std::size_t(L.rows * (L.cols - 1) + L.cols * (L.rows - 1)));
	}
}

TEST_CASE("seam restriction projects both border lines onto the seam axis")
{
	TwoPatches tp;
	Footprint a{{3, 14, 1.}, {3, 15, 2.}, {4, 15, 3.}};
	Footprint b{{3, 16, 4.}, {5, 16, 5.}, {5, 17, 6.}};
	auto ra = seam_restriction(a, tp.layout, tp.seam, true);
	auto rb = seam_restriction(b, tp.layout, tp.seam, false);
	CHECK(ra == Footprint{{3, 0, 2.}, {4, 0, 3.}});
	CHECK(rb == Footprint{{3, 0, 4.}, {5, 0, 5.}});

	auto L = partition({32, 16}, 16, 2);
	auto s = seams(L).at(0);
	// Regions overlap on columns 14..17.
	auto rm = seam_restriction(Footprint{{3, 13, 1.}, {3, 14, 1.}, {3, 17, 1.}, {3, 18, 1.}}, L, s, true);
	CHECK(rm.size() == 2);
}

TEST_CASE("same cell split across a seam matches bidirectionally")
{
	TwoPatches tp;
	auto tr = spikes(400, 0.03, 1);
	std::mt19937 rng(2);
	std::normal_distribution<double> nd(0., 0.1);
	auto tr2 = tr;
	for (double &v : tr2)
		v = std::max(0., v + nd(rng));
	BorderProfile a{1, column(15, 3, 11, 7, 2), tr}, b{2, column(16, 3, 11, 7, 2), tr2};
	auto m = match_across_patches(a, b, tp.layout, tp.seam, {});
	REQUIRE(m);
	CHECK(m->tier == MatchTier::bidirectional);
	CHECK(m->temporal_defined);
	CHECK(m->temporal_score >= 0.95);
}

TEST_CASE("independent cells on the same border spot do not match")
{
	TwoPatches tp;
	BorderProfile a{1, column(15, 3, 11, 7, 2), spikes(600, 0.03, 1)}, b{2, column(16, 3, 11, 7, 2), spikes(600, 0.03, 99)};
	auto m = match_across_patches(a, b, tp.layout, tp.seam, {});
	CHECK_FALSE(m);
}

TEST_CASE("dimmer partial view matches asymmetrically")
{
	TwoPatches tp;
	auto tr = spikes(400, 0.03, 4);
	auto dim = tr;
	for (double &v : dim)
		v *= 0.4;
	BorderProfile a{1, column(15, 3, 11, 7, 1.5), tr}, b{2, column(16, 6, 8, 7, 1.5), dim};
	auto m = match_across_patches(a, b, tp.layout, tp.seam, {});
	REQUIRE(m);
	CHECK(m->rho_ba == doctest::Approx(1.));
	CHECK(m->rho_ab < 0.9);
	CHECK(m->rho_ab >= 0.6);
	CHECK(m->tier == MatchTier::asymmetric);
}

TEST_CASE("temporal asymmetry lowers the tier")
{
	TwoPatches tp;
	const std::size_t T = 600;
	std::vector<double> ta(T, 0.), tb(T, 0.);
	// Twenty transients in a; b shows eight in full and the rest faintly,
	// below its own activity level.
	for (int k = 0; k < 20; k++)
		for (int d = 0; d < 12; d++) {
			double v = 5. * calcium_kernel(d + 1., 1., 4.);
			ta[std::size_t(k) * 30 + d] = v;
			tb[std::size_t(k) * 30 + d] = k % 5 < 2 ? v : 0.19 * v;
		}
	BorderProfile a{1, column(15, 3, 11, 7, 2), ta}, b{2, column(16, 3, 11, 7, 2), tb};
	// Silent frames weigh heavily in the correlation, so the floor is lowered.
	GlueConfig cfg;
	cfg.tau_corr = 0.4;
	auto m = match_across_patches(a, b, tp.layout, tp.seam, cfg);
	REQUIRE(m);
	CHECK(m->temporal_score >= 0.4);
	CHECK(m->tier == MatchTier::spatial_sym_temporal_asym);
}

TEST_CASE("too few common active frames caps the tier")
{
	TwoPatches tp;
	std::vector<double> ta(50, 0.), tb(50, 0.);
	ta[10] = tb[10] = 5.;
	ta[11] = tb[11] = 3.;
	BorderProfile a{1, column(15, 3, 11, 7, 2), ta}, b{2, column(16, 3, 11, 7, 2), tb};
	auto m = match_across_patches(a, b, tp.layout, tp.seam, {});
	REQUIRE(m);
	CHECK_FALSE(m->temporal_defined);
	CHECK(m->tier == MatchTier::asymmetric);
	// Without temporal evidence an asymmetric spatial match is not enough.
	BorderProfile c{3, column(16, 6, 8, 7, 1.5), tb};
	CHECK_FALSE(match_across_patches(a, c, tp.layout, tp.seam, {}));
	// Disjoint border pixels never match.
	BorderProfile d{4, column(16, 12, 15, 13, 2), tb};
	CHECK_FALSE(match_across_patches(a, d, tp.layout, tp.seam, {}));
}

TEST_CASE("tiers are ordered")
{
	CHECK(int(MatchTier::bidirectional) > int(MatchTier::spatial_sym_temporal_asym));
	CHECK(int(MatchTier::spatial_sym_temporal_asym) > int(MatchTier::asymmetric));
	CHECK(std::string(tier_name(MatchTier::bidirectional)) == "bidirectional");
}

TEST_CASE("single patch layout equals the unpatched pipeline")
{
	auto gt = video(48, 48, {{12, 12}, {30, 34}}, 200);
	PatchEngine e(gt.geometry(), engine_config(48));
	PatchPipeline p(gt.geometry(), PipelineConfig{});
	for (std::size_t t = 0; t < gt.video.size(); t++) {
		auto a = e.process(gt.frame(t));
		auto b = p.process(gt.frame(t));
		auto ev = b.events;
		std::sort(ev.begin(), ev.end(), [](const auto &x, const auto &y) { return x.profile_id < y.profile_id; });
		REQUIRE(a.events == ev);
	}
	auto tr = e.traces();
	REQUIRE(tr.size() == p.profiles().stables().size());
	for (const auto &s : p.profiles().stables())
		CHECK(tr.at(s.id) == p.traces().at(s.id));
}

TEST_CASE("interior cell is reported by exactly one patch")
{
	auto gt = video(64, 64, {{12, 12}}, 200);
	PatchEngine e(gt.geometry(), engine_config(32, 2));
	run(e, gt);
	CHECK(e.patch(0).profiles().stables().size() == 1);
	for (std::size_t i = 1; i < 4; i++)
		CHECK(e.patch(i).profiles().stables().empty());
	auto prof = e.profiles();
	REQUIRE(prof.size() == 1);
	CHECK(prof[0].members.size() == 1);
}

TEST_CASE("seam cell gives two partial profiles glued into one")
{
	auto gt = video(64, 32, {{14, 31.5}}, 300);
	PatchEngine e(gt.geometry(), engine_config(32, 2));
	run(e, gt);
	CHECK(e.patch(0).profiles().stables().size() == 1);
	CHECK(e.patch(1).profiles().stables().size() == 1);
	auto prof = e.profiles();
	REQUIRE(prof.size() == 1);
	REQUIRE(prof[0].members.size() == 2);
	std::size_t area = 0;
	for (auto [i, id] : prof[0].members)
		area += e.patch(i).profiles().find(id)->pixels.size();
	CHECK(prof[0].pixels.size() == area);
	REQUIRE_FALSE(e.matches().empty());
	CHECK(e.matches()[0].tier == MatchTier::bidirectional);
	auto tr = e.traces().at(prof[0].id);
	CHECK(pearson(tr, gt.traces[0]) > 0.9);
}

TEST_CASE("cell across two seams becomes one global profile")
{
	// A thin bar spanning three 32-pixel patches.
	const int W = 96, H = 32, T = 300;
	Footprint bar;
	for (int r = 0; r < H; r++) {
		const double w = std::exp(-0.5 * (r - 16) * (r - 16) / 1.44);
		if (w >= 0.05)
			for (int c = 3; c < W - 3; c++)
				bar.push_back({r, c, w});
	}
	auto tr = spikes(T, 0.04, 8);
	std::mt19937 rng(5);
	std::normal_distribution<double> nd(0., 1.);
	PatchEngine e({W, H}, engine_config(32, 3));
	for (int t = 0; t < T; t++) {
		Image f(W, H, 10.);
		for (auto &v : f.pixels)
			v += nd(rng);
		for (const auto &p : bar)
			f.at(p.row, p.col) += p.weight * tr[std::size_t(t)];
		e.process(f);
	}
	auto prof = e.profiles();
	REQUIRE(prof.size() == 1);
	CHECK(prof[0].members.size() == 3);
}

TEST_CASE("no matches leaves the disjoint union of patch sets")
{
	auto gt = video(64, 64, {{12, 12}, {12, 50}, {50, 14}, {48, 48}}, 300);
	PatchEngine e(gt.geometry(), engine_config(32, 4));
	run(e, gt);
	CHECK(e.matches().empty());
	std::size_t locals = 0;
	for (std::size_t i = 0; i < 4; i++)
		locals += e.patch(i).profiles().stables().size();
	CHECK(e.profiles().size() == locals);
	CHECK(locals == 4);
}

TEST_CASE("patched results do not depend on the worker count")
{
	auto gt = video(64, 64, {{12, 12}, {31.5, 20}, {40, 31.5}, {50, 50}}, 250, 3);
	PatchEngine a(gt.geometry(), engine_config(32, 1)), b(gt.geometry(), engine_config(32, 4));
	std::vector<EngineFrame> fa, fb;
	run(a, gt, &fa);
	run(b, gt, &fb);
	REQUIRE(fa.size() == fb.size());
	for (std::size_t t = 0; t < fa.size(); t++)
		REQUIRE(fa[t].events == fb[t].events);
	auto pa = a.profiles(), pb = b.profiles();
	REQUIRE(pa.size() == pb.size());
	for (std::size_t k = 0; k < pa.size(); k++) {
		CHECK(pa[k].id == pb[k].id);
		CHECK(pa[k].pixels == pb[k].pixels);
	}
	CHECK(a.traces() == b.traces());
}

TEST_CASE("interior cells are found alike with and without patches")
{
	auto gt = video(64, 64, {{10, 10}, {12, 48}, {46, 16}, {50, 50}, {20, 22}}, 300, 7);
	PatchEngine one(gt.geometry(), engine_config(64, 2)), four(gt.geometry(), engine_config(32, 2));
	run(one, gt);
	run(four, gt);
	auto p1 = one.profiles(), p4 = four.profiles();
	auto t1 = one.traces(), t4 = four.traces();
	REQUIRE(p1.size() == gt.cells.size());
	REQUIRE(p4.size() == p1.size());
	for (const auto &a : p1) {
		int partners = 0;
		for (const auto &b : p4)
			if (footprint_overlap(a.pixels, b.pixels) >= 0.8) {
				partners++;
				CHECK(pearson(t1[a.id], t4[b.id]) > 0.95);
			}
		CHECK(partners == 1);
	}
}

TEST_CASE("a failing frame is reported and processing continues")
{
	auto gt = video(64, 32, {{14, 14}}, 40);
	PatchEngine e(gt.geometry(), engine_config(32, 2));
	for (std::size_t t = 0; t < 20; t++)
		CHECK_FALSE(e.process(gt.frame(t)).failed);
	Image bad = gt.frame(20);
	bad.at(3, 40) = std::nan("");
	auto out = e.process(bad);
	CHECK(out.failed);
	REQUIRE(out.errors.size() == 1);
	CHECK(out.errors[0].find("patch 1") == 0);
	for (std::size_t t = 21; t < 40; t++)
		CHECK_FALSE(e.process(gt.frame(t)).failed);
	CHECK(e.frames_processed() == 40);
	for (const auto &[id, tr] : e.traces())
		CHECK(tr.size() == 40);
	CHECK_THROWS(e.process(Image(10, 10)));
}

TEST_CASE("configuration is validated")
{
	PatchEngineConfig c;
	c.patch_size = 8;
	CHECK_THROWS(PatchEngine({64, 64}, c));
	c = {};
	c.glue.tau_glue = 0.95;
	CHECK_THROWS(c.validate());
	c = {};
	c.glue.min_common_active = 1;
	CHECK_THROWS(c.validate());
}
