#pragma once

// Frame preprocessing and new-cell candidate detection.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "seudo/common.hpp"

namespace seudo {

struct DenoiseConfig
{
	// Width of the spatial Gaussian filter; 0 disables it.
	double spatial_sigma = 1.;
	// Number of most recent frames averaged; 1 means frame-by-frame.
	int window = 1;
};

// Separable Gaussian blur, kernel cut at 3 sigma and normalized to sum 1.
// Borders replicate the edge pixels, so constant images stay constant.
Image gaussian_blur(const Image &img, double sigma);

// Blur of the mean of the last min(window, history.size()) frames.
// history is ordered oldest first.
Image denoise(std::span<const Image> history, const DenoiseConfig &config);

struct SectionGrid
{
	int rows = 3;
	int cols = 3;
};

// Per-pixel noise level. Most of a frame is dark, so median - min over a
// region estimates the half-amplitude of the noise there. Per-section
// medians and minimums are bilinearly interpolated between section centers.
struct NoiseMap
{
	FrameGeometry geometry;
	SectionGrid sections;
	std::vector<double> local_median;
	std::vector<double> local_min;
	std::vector<double> sigma_half;

	double mean_sigma_half() const;
};

// Sections smaller than 16 pixels are avoided by using fewer sections.
NoiseMap estimate_noise(const Image &frame, SectionGrid sections = {});

// Median of a sample; the mean of the two middle values for even sizes.
double median_of(std::vector<double> values);

enum class Connectivity
{
	four,
	eight,
};

struct DetectConfig
{
	double k_sigma = 3.;
	// Counted over seed pixels, those above the k_sigma threshold.
	int min_area = 4;
	Connectivity connectivity = Connectivity::four;
	// When set, components grow from their seeds over pixels above
	// local_median + grow_k_sigma * sigma_half (hysteresis).
	std::optional<double> grow_k_sigma;
};

struct CandidateProfile
{
	// Weights are heights above the local median.
	Footprint pixels;
	Rect bounding_box;
	std::int64_t birth_frame = 0;
};

// Connected areas of the residual above local_median + k_sigma * sigma_half,
// at least min_area pixels each, in raster order of their first pixel.
// With grow_k_sigma set, growth and weights use grow_from when given (the
// residual otherwise); seeds always come from the residual.
std::vector<CandidateProfile> detect_components(const Image &residual, const NoiseMap &noise, const DetectConfig &config = {}, std::int64_t frame_index = 0, const Image *grow_from = nullptr);

} // namespace seudo
