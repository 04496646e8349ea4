#pragma once

// Scoring of engine output against ground truth.

#include <optional>
#include <string>
#include <vector>

#include "seudo/common.hpp"
#include "seudo/engine.hpp"
#include "seudo/synthetic.hpp"

namespace seudo {

// One profile found by the engine, in frame coordinates.
struct FoundCell
{
	std::uint64_t id = 0;
	Footprint footprint;
	std::vector<double> trace;
};

struct MatchThresholds
{
	double strong_corr = 0.8;
	double weak_corr = 0.5;
	// Shared pixels over the smaller of the two footprints.
	double min_overlap = 0.3;
};

struct MatchPair
{
	std::size_t found = 0;
	std::size_t truth = 0;
	double overlap = 0.;
	double correlation = 0.;
	bool strong = false;
};

struct MatchReport
{
	int strong_hits = 0;
	int weak_hits = 0;
	int false_alarms = 0;
	int misses = 0;
	// Assigned pairs, in assignment order.
	std::vector<MatchPair> pairs;
	// Truth index assigned to each found cell, or -1.
	std::vector<int> found_to_truth;

	double mean_hit_correlation() const;
};

// Shared pixels over the smaller footprint.
double footprint_overlap(const Footprint &a, const Footprint &b);

// Greedy one-to-one assignment by descending trace correlation among pairs
// with enough spatial overlap. Traces shorter than the truth are zero-padded.
MatchReport match_cells(const std::vector<FoundCell> &found, const GroundTruth &truth, const MatchThresholds &thresholds = {});

struct TransientOptions
{
	// Truth frames above this fraction of the truth maximum are active.
	double truth_level_fraction = 0.1;
	// Found-trace threshold; default median + k_mad * 1.4826 * MAD.
	std::optional<double> threshold;
	double k_mad = 3.;
};

struct TransientReport
{
	double tpr = 0.;
	double fpr = 0.;
	double kept_real_fluorescence = 0.;
	double kept_false_fluorescence = 0.;
};

// found: activation estimated for a known cell. truth: its true activation.
// contaminant[t]: frame t has activity from an unknown overlapping cell only.
// false_reference[t]: activation a plain least-squares fit would attribute to
// the known cell in frame t; energy fractions over contaminant frames are
// relative to it. All outputs are clamped to [0, 1].
TransientReport transient_metrics(const std::vector<double> &found, const std::vector<double> &truth, const std::vector<char> &contaminant, const std::vector<double> &false_reference, const TransientOptions &options = {});

// Known cell A plus an unknown cell U overlapping it. A fires alone, then U
// alone, then both; each a calcium transient of the given peak amplitude.
// Each frame is fit with the known profile only (plain non-negative least
// squares) and with the bump dictionary added.
struct OverlapScenario
{
	double overlap = 0.3;
	double amplitude = 10.;
	double lambda = 0.15;
	double gamma = 0.;
	double noise_sigma = 0.;
	int size = 40;
	int kernel_radius = 2;
	int kernel_stride = 2;
	int frames_per_phase = 15;
	std::uint64_t seed = 7;
};

struct OverlapScenarioResult
{
	TransientReport robust;
	// Activation given to A over the U-only frames.
	double robust_false_energy = 0.;
	double nnls_false_energy = 0.;
	std::vector<double> truth, robust_trace, nnls_trace;
};

OverlapScenarioResult run_overlap_scenario(const OverlapScenario &scenario);

struct ThroughputReport
{
	// Wall clock, frames after the warm-up only, no file I/O.
	double fps_mean = 0.;
	double cpu_seconds_per_frame = 0.;
	std::vector<double> latencies;
	// Global stable profiles at the end of the run.
	std::size_t cells = 0;
	std::size_t frames = 0;
};

// Runs a fresh engine over the frames; the first warmup frames are processed
// but not timed.
ThroughputReport measure_throughput(const std::vector<Image> &frames, const EngineConfig &config, std::size_t warmup = 10);

// Machine-readable summary and plot-ready table of a match.
std::string match_report_json(const MatchReport &report);
std::string match_pairs_csv(const MatchReport &report);

} // namespace seudo
