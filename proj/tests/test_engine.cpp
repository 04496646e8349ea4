#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "seudo/engine.hpp"
#include "seudo/eval.hpp"
#include "seudo/frame_pipeline.hpp"
#include "seudo/synthetic.hpp"

using namespace seudo;

namespace {

GroundTruth small_video(int cells, std::uint64_t seed, int frames = 300)
{
	SyntheticConfig c;
	c.width = c.height = 64;
	c.frames = frames;
	c.n_cells = cells;
	c.seed = seed;
	c.spike_rate = 0.03;
	return generate(c);
}

std::vector<EngineFrame> run(Engine &e, const GroundTruth &gt, double scale = 1.)
{
	std::vector<EngineFrame> out;
	for (std::size_t t = 0; t < gt.video.size(); t++) {
		Image f = gt.frame(t);
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

} // namespace

TEST_CASE("default config round trips through JSON")
{
	EngineConfig c;
	auto text = config_to_json(c);
	auto back = config_from_json(text);
	CHECK(config_to_json(back) == text);
	auto doc = nlohmann::json::parse(text);
	CHECK(doc["lambda"] == 4.);
	CHECK(doc["patch"]["size"] == 80);
	CHECK(doc["glue"]["tau_glue"] == 0.6);
}

TEST_CASE("modified config round trips and partial configs take defaults")
{
	EngineConfig c;
	c.engine.pipeline.lambda = 1.25;
	c.engine.pipeline.detect.grow_k_sigma.reset();
	c.engine.pipeline.detect.connectivity = Connectivity::eight;
	c.engine.pipeline.manager.brightness = BrightnessSource::activation;
	c.engine.pipeline.solver.momentum = MomentumSchedule::fista;
	c.engine.patch_size = 40;
	c.engine.glue.tau_corr = 0.55;
	c.max_consecutive_failures = 3;
	auto back = config_from_json(config_to_json(c));
	CHECK(config_to_json(back) == config_to_json(c));
	CHECK_FALSE(back.engine.pipeline.detect.grow_k_sigma);

	auto partial = config_from_json(R"({"gamma": 7, "detect": {"min_area": 6}})");
	CHECK(partial.engine.pipeline.gamma == 7.);
	CHECK(partial.engine.pipeline.detect.min_area == 6);
	CHECK(partial.engine.pipeline.detect.k_sigma == 3.);
	CHECK(partial.engine.pipeline.lambda == 4.);
}

TEST_CASE("bad configs are rejected with the offending key")
{
	auto message = [](const char *text) {
		try {
			config_from_json(text);
		} catch (const Error &e) {
			return std::string(e.what());
		}
		return std::string();
	};
	CHECK(message(R"({"lamda": 1})").find("lamda") != std::string::npos);
	CHECK(message(R"({"glue": {"tau": 1}})").find("glue.tau") != std::string::npos);
	CHECK(message(R"({"lambda": "x"})").find("lambda") != std::string::npos);
	CHECK(message(R"({"patch": {"size": 4}})").find("patch_size") != std::string::npos);
	CHECK(message(R"({"detect": {"connectivity": 6}})").find("connectivity") != std::string::npos);
	CHECK(message(R"({"kernel": 3})").find("kernel") != std::string::npos);
	CHECK(message("not json").find("JSON") != std::string::npos);
	CHECK(message(R"({"lambda": -1})") != "");
}

TEST_CASE("fresh engine has no profiles and exports its config")
{
	EngineConfig c;
	c.engine.patch_size = 32;
	Engine e({64, 64}, c);
	auto s = e.snapshot();
	CHECK(s.profiles.empty());
	CHECK(s.traces.empty());
	CHECK(s.frames == 0);
	CHECK(config_to_json(config_from_json(e.export_config())) == e.export_config());
}

TEST_CASE("zero frame gives no events; wrong shapes and closed engines fail")
{
	Engine e({32, 32});
	CHECK(e.push_frame(Image(32, 32)).events.empty());
	std::vector<float> px(32 * 32, 0.f);
	CHECK(e.push_frame(std::span<const float>(px)).events.empty());
	CHECK_THROWS(e.push_frame(Image(31, 32)));
	std::vector<float> short_px(10, 0.f);
	CHECK_THROWS(e.push_frame(std::span<const float>(short_px)));
	e.close();
	CHECK_THROWS(e.push_frame(Image(32, 32)));
	CHECK_THROWS(e.snapshot());
}

TEST_CASE("all-noise video ends with no stable profiles")
{
	for (std::uint64_t seed = 1; seed <= 3; seed++) {
		auto gt = small_video(0, seed, 400);
		Engine e(gt.geometry());
		run(e, gt);
		CHECK(e.snapshot().profiles.empty());
	}
}

TEST_CASE("early detection within three frames of the first supra-threshold frame")
{
	const DetectConfig detect;
	for (std::uint64_t seed = 1; seed <= 8; seed++) {
		SyntheticConfig c;
		c.width = c.height = 48;
		c.frames = 200;
		c.centers = {{24, 24}};
		c.n_cells = 1;
		c.amplitude = 8.;
		c.seed = seed;
		c.spike_rate = 0.05;
		auto gt = generate(c);
		Engine e(gt.geometry());
		std::int64_t onset = -1, first_event = -1, first_stable = -1;
		for (std::size_t t = 0; t < gt.video.size(); t++) {
			Image f = gt.frame(t);
			if (onset < 0) {
				std::vector<Image> one{f};
				NoiseMap nm = estimate_noise(denoise(one, {}), {});
				if (gt.traces[0][t] > detect.k_sigma * nm.mean_sigma_half())
					onset = std::int64_t(t);
			}
			auto out = e.push_frame(f);
			for (const auto &ev : out.events) {
				if (first_event < 0)
					first_event = ev.frame_index;
				if (ev.kind == EventKind::stable && first_stable < 0)
					first_stable = ev.frame_index;
			}
		}
		CAPTURE(seed);
		REQUIRE(onset >= 0);
		CHECK(first_event >= 0);
		CHECK(first_event <= onset + 3);
		CHECK(first_stable > first_event);
	}
}

TEST_CASE("events are ordered, complete per frame and deterministic")
{
	auto gt = small_video(5, 4);
	EngineConfig c;
	c.engine.patch_size = 32;
	c.engine.threads = 3;
	Engine a(gt.geometry(), c), b(gt.geometry(), c);
	auto fa = run(a, gt), fb = run(b, gt);
	std::int64_t last = -1;
	for (std::size_t t = 0; t < fa.size(); t++) {
		CHECK(fa[t].frame_index == std::int64_t(t));
		for (const auto &ev : fa[t].events) {
			CHECK(ev.frame_index == std::int64_t(t));
			CHECK(ev.frame_index >= last);
			last = ev.frame_index;
		}
		REQUIRE(fa[t].events == fb[t].events);
	}
	for (std::size_t i = 0; i < a.core().layout().patches.size(); i++)
		CHECK(a.core().patch(i).frames_buffered() <= std::size_t(c.engine.pipeline.denoise.window));
	auto s1 = a.snapshot(), s2 = a.snapshot();
	CHECK(s1.traces == s2.traces);
	REQUIRE(s1.profiles.size() == s2.profiles.size());
	for (std::size_t k = 0; k < s1.profiles.size(); k++)
		CHECK(s1.profiles[k].pixels == s2.profiles[k].pixels);
	for (const auto &[id, tr] : s1.traces)
		CHECK(tr.size() == gt.video.size());
}

TEST_CASE("denoise window bounds the frame history")
{
	EngineConfig c;
	c.engine.pipeline.denoise.window = 4;
	Engine e({40, 40}, c);
	for (int t = 0; t < 20; t++)
		e.push_frame(Image(40, 40, 1.));
	CHECK(e.core().patch(0).frames_buffered() == 4);
}

TEST_CASE("scaling the video by 100 changes no decision")
{
	auto gt = small_video(6, 9);
	Engine a(gt.geometry()), b(gt.geometry());
	auto fa = run(a, gt), fb = run(b, gt, 100.);
	for (std::size_t t = 0; t < fa.size(); t++) {
		REQUIRE(fa[t].events.size() == fb[t].events.size());
		for (std::size_t k = 0; k < fa[t].events.size(); k++) {
			CHECK(fa[t].events[k].profile_id == fb[t].events[k].profile_id);
			CHECK(fa[t].events[k].kind == fb[t].events[k].kind);
		}
	}
	auto ra = score(a, gt), rb = score(b, gt);
	CHECK(ra.strong_hits == rb.strong_hits);
	CHECK(ra.found_to_truth == rb.found_to_truth);
}

TEST_CASE("too many consecutive failures abort the stream")
{
	EngineConfig c;
	c.max_consecutive_failures = 2;
	Engine e({32, 32}, c);
	Image bad(32, 32, std::numeric_limits<double>::quiet_NaN());
	CHECK(e.push_frame(bad).failed);
	CHECK_FALSE(e.push_frame(Image(32, 32)).failed);
	CHECK(e.push_frame(bad).failed);
	CHECK(e.push_frame(bad).failed);
	CHECK_THROWS_WITH(e.push_frame(bad), doctest::Contains("consecutive"));
	CHECK(e.closed());
}
