// Command-line front end: stream a video through the engine, write events as
// they are produced, persist profiles and traces, optionally score against a
// ground-truth manifest, or generate a synthetic video.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "seudo/engine.hpp"
#include "seudo/eval.hpp"
#include "seudo/io.hpp"
#include "seudo/synthetic.hpp"

using namespace seudo;

namespace {

enum Exit
{
	exit_ok = 0,
	exit_usage = 1,
	exit_format = 2,
	exit_runtime = 3,
};

struct Options
{
	std::string input;
	std::string format = "raw_f32";
	std::string config;
	std::string output_dir;
	std::optional<int> patch_size;
	std::optional<int> threads;
	std::optional<double> lambda;
	std::optional<double> gamma;
	bool report = false;
	std::string truth;
	std::string generate;
	bool print_config = false;
	bool quiet = false;

	// Generator settings.
	int gen_width = 128;
	int gen_height = 128;
	int gen_frames = 600;
	int gen_cells = 15;
	double gen_snr = 5.;
	double gen_overlap = 0.;
	std::uint64_t gen_seed = 1;
};

int run_generate(const Options &o)
{
	SyntheticConfig sc;
	sc.width = o.gen_width;
	sc.height = o.gen_height;
	sc.frames = o.gen_frames;
	sc.n_cells = o.gen_cells;
	sc.snr = o.gen_snr;
	sc.overlap_fraction = o.gen_overlap;
	sc.seed = o.gen_seed;
	GroundTruth gt = generate(sc);
	write_raw_video(o.generate, gt.geometry(), gt.video);
	const std::string manifest = o.truth.empty() ? o.generate + ".truth.json" : o.truth;
	write_text_file(manifest, manifest_json(gt));
	if (!o.quiet)
		std::fprintf(stderr, "wrote %d frames of %dx%d with %zu cells to %s, truth in %s\n", sc.frames, sc.width, sc.height, gt.cells.size(), o.generate.c_str(), manifest.c_str());
	return exit_ok;
}

EngineConfig effective_config(const Options &o)
{
	EngineConfig cfg;
	if (!o.config.empty())
		cfg = config_from_json(read_text_file(o.config));
	if (o.patch_size)
		cfg.engine.patch_size = *o.patch_size;
	if (o.threads)
		cfg.engine.threads = *o.threads;
	if (o.lambda)
		cfg.engine.pipeline.lambda = *o.lambda;
	if (o.gamma)
		cfg.engine.pipeline.gamma = *o.gamma;
	cfg.validate();
	return cfg;
}

int run_stream(const Options &o, const EngineConfig &cfg)
{
	VideoInput input(o.input, parse_video_format(o.format));
	FrameSource &src = input.source();

	std::optional<EventWriter> events;
	if (!o.output_dir.empty()) {
		std::error_code ec;
		std::filesystem::create_directories(o.output_dir, ec);
		if (ec)
			throw Error("cannot create " + o.output_dir + ": " + ec.message());
		events.emplace((std::filesystem::path(o.output_dir) / "events.jsonl").string());
	} else {
		std::cout << events_header_line() << std::flush;
	}

	Engine engine(src.geometry(), cfg);
	std::size_t shown = 0;
	std::int64_t failed = 0;
	int status = exit_ok;
	for (;;) {
		std::optional<Image> frame = src.next();
		for (; shown < src.warnings().size(); shown++)
			std::fprintf(stderr, "warning: %s\n", src.warnings()[shown].c_str());
		if (!frame)
			break;
		EngineFrame out;
		try {
			out = engine.push_frame(*frame);
		} catch (const Error &e) {
			std::fprintf(stderr, "error: %s\n", e.what());
			status = exit_runtime;
			break;
		}
		if (out.failed) {
			failed++;
			for (const auto &msg : out.errors)
				std::fprintf(stderr, "frame %lld failed: %s\n", (long long)out.frame_index, msg.c_str());
		}
		if (events)
			events->write(out.events);
		else {
			for (const auto &e : out.events)
				std::cout << event_json_line(e);
			std::cout << std::flush;
		}
	}

	const PatchEngine &core = engine.core();
	Snapshot snap{core.profiles(), core.traces(), core.frames_processed()};
	if (!o.output_dir.empty())
		persist_snapshot(o.output_dir, snap, cfg);
	if (!o.quiet)
		std::fprintf(stderr, "processed %lld frames (%lld failed), %zu stable profiles\n", (long long)snap.frames, (long long)failed, snap.profiles.size());

	if (o.report) {
		GroundTruth truth = parse_manifest(read_text_file(o.truth));
		if (!(truth.geometry() == src.geometry()))
			throw FormatError("truth manifest geometry does not match the video");
		std::vector<FoundCell> found;
		for (const auto &p : snap.profiles)
			found.push_back({p.id, p.pixels, snap.traces[p.id]});
		MatchReport rep = match_cells(found, truth);
		std::string json_text = match_report_json(rep);
		if (!o.output_dir.empty()) {
			const std::filesystem::path d(o.output_dir);
			write_text_file((d / "report.json").string(), json_text + "\n");
			write_text_file((d / "pairs.csv").string(), match_pairs_csv(rep));
		} else {
			std::cerr << json_text << "\n";
		}
		std::fprintf(stderr, "strong %d, weak %d, false alarms %d, misses %d, mean hit correlation %.3f\n", rep.strong_hits, rep.weak_hits, rep.false_alarms, rep.misses, rep.mean_hit_correlation());
	}
	return status;
}

} // namespace

int main(int argc, char **argv)
{
	CLI::App app{"Streaming cell discovery and demixing for calcium imaging video"};
	Options o;
	app.add_option("--input", o.input, "Video file, or - for standard input");
	app.add_option("--format", o.format, "raw_f32 or tiff_gray")->capture_default_str();
	app.add_option("--config", o.config, "JSON engine configuration");
	app.add_option("--output-dir", o.output_dir, "Directory for events, profiles, traces and reports");
	app.add_option("--patch-size", o.patch_size, "Patch edge length in pixels (>= 16)");
	app.add_option("--threads", o.threads, "Worker threads, 0 for all hardware threads");
	app.add_option("--lambda", o.lambda, "Bump l1 weight, in units of the noise level");
	app.add_option("--gamma", o.gamma, "Bump branch penalty, in units of squared noise level");
	app.add_flag("--report", o.report, "Score the result against --truth");
	app.add_option("--truth", o.truth, "Ground-truth manifest (read with --report, written with --generate)");
	app.add_option("--generate", o.generate, "Write a synthetic raw video to this path and exit");
	app.add_flag("--print-config", o.print_config, "Print the effective configuration and exit");
	app.add_flag("-q,--quiet", o.quiet, "Only print warnings and errors");
	auto *gen = app.add_option_group("generator", "Synthetic video settings");
	gen->add_option("--gen-width", o.gen_width)->capture_default_str();
	gen->add_option("--gen-height", o.gen_height)->capture_default_str();
	gen->add_option("--gen-frames", o.gen_frames)->capture_default_str();
	gen->add_option("--gen-cells", o.gen_cells)->capture_default_str();
	gen->add_option("--gen-snr", o.gen_snr)->capture_default_str();
	gen->add_option("--gen-overlap", o.gen_overlap)->capture_default_str();
	gen->add_option("--gen-seed", o.gen_seed)->capture_default_str();

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		int code = app.exit(e);
		return code == 0 ? exit_ok : exit_usage;
	}

	try {
		if (!o.generate.empty())
			return run_generate(o);
		EngineConfig cfg;
		try {
			cfg = effective_config(o);
		} catch (const Error &e) {
			std::fprintf(stderr, "error: %s\n", e.what());
			return exit_usage;
		}
		if (o.print_config) {
			std::cout << config_to_json(cfg) << "\n";
			return exit_ok;
		}
		if (o.input.empty()) {
			std::fprintf(stderr, "error: --input is required\n%s", app.help().c_str());
			return exit_usage;
		}
		if (o.report && o.truth.empty()) {
			std::fprintf(stderr, "error: --report needs --truth\n");
			return exit_usage;
		}
		return run_stream(o, cfg);
	} catch (const FormatError &e) {
		std::fprintf(stderr, "error: %s\n", e.what());
		return exit_format;
	} catch (const std::exception &e) {
		std::fprintf(stderr, "error: %s\n", e.what());
		return exit_runtime;
	}
}
