#pragma once

// Seeded ground-truth video generator: elliptical Gaussian cells, Poisson
// spike trains through a double-exponential calcium kernel, constant
// background and i.i.d. Gaussian noise.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seudo/common.hpp"

namespace seudo {

struct SyntheticConfig
{
	int width = 128;
	int height = 128;
	int frames = 600;
	int n_cells = 15;
	// Range of the footprint Gaussian width along each ellipse axis, pixels.
	double cell_radius_min = 1.5;
	double cell_radius_max = 2.5;
	// > 0: cells are placed in pairs whose intersection covers this fraction
	// of the smaller footprint; 0: all footprints disjoint.
	double overlap_fraction = 0.;
	// Peak of a single isolated transient, brightness units.
	double amplitude = 5.;
	// amplitude / noise standard deviation; infinity gives a noiseless video.
	double snr = 5.;
	double background = 10.;
	// Expected spikes per frame per cell.
	double spike_rate = 0.02;
	double rise_tau = 1.;
	double decay_tau = 8.;
	// Empty pixels kept between footprints and from the frame edge.
	int min_gap = 2;
	std::uint64_t seed = 1;
	// Optional fixed cell centers (row, col); overrides random placement.
	std::vector<std::pair<double, double>> centers;

	void validate() const;
	double noise_sigma() const { return std::isinf(snr) ? 0. : amplitude / snr; }
};

struct TruthCell
{
	// Unit-peak footprint, support where the Gaussian is at least 0.05.
	Footprint footprint;
	double center_row = 0.;
	double center_col = 0.;
	// Spike peak amplitude in brightness units.
	double amplitude = 0.;
};

struct GroundTruth
{
	SyntheticConfig config;
	std::vector<TruthCell> cells;
	// traces[k][t]: activation of cell k in brightness units (footprint peak).
	std::vector<std::vector<double>> traces;
	// Frames, row-major, float-valued so raw files round-trip exactly.
	std::vector<std::vector<float>> video;

	FrameGeometry geometry() const { return {config.width, config.height}; }
	Image frame(std::size_t t) const;
	// Sum of footprint * trace plus background, without noise.
	Image clean_frame(std::size_t t) const;
};

GroundTruth generate(const SyntheticConfig &config);

// Noise added to frame t; reproducible from the seed alone.
std::vector<double> generate_noise(const SyntheticConfig &config, std::size_t t);

// Peak-normalized double-exponential transient kernel value at lag t >= 0.
double calcium_kernel(double t, double rise_tau, double decay_tau);

// Manifest with config, footprints and traces (no frames), as JSON text.
std::string manifest_json(const GroundTruth &truth);
// Reads a manifest; the video is left empty.
GroundTruth parse_manifest(const std::string &text);

} // namespace seudo
