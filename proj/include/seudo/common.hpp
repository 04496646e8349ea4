#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace seudo {

// All recoverable failures in the library are reported with this type.
class Error : public std::runtime_error
{
public:
	using std::runtime_error::runtime_error;
};

// Geometry of a frame or of a patch within a frame.
struct FrameGeometry
{
	int width = 0;
	int height = 0;

	std::size_t pixels() const { return std::size_t(width) * std::size_t(height); }
	bool operator==(const FrameGeometry &) const = default;
};

// A single-channel image, row-major, brightness in arbitrary fluorescence units.
struct Image
{
	int width = 0;
	int height = 0;
	std::vector<double> pixels;

	Image() = default;
	Image(int w, int h, double fill = 0.)
		: width(w), height(h), pixels(std::size_t(w) * std::size_t(h), fill)
	{ }

	FrameGeometry geometry() const { return {width, height}; }
	std::size_t size() const { return pixels.size(); }
	double &at(int row, int col) { return pixels[std::size_t(row) * width + col]; }
	double at(int row, int col) const { return pixels[std::size_t(row) * width + col]; }
};

struct PixelWeight
{
	int row = 0;
	int col = 0;
	double weight = 0.;

	bool operator==(const PixelWeight &) const = default;
};

// Sparse weighted pixel set, kept sorted by (row, col) with unique pixels.
using Footprint = std::vector<PixelWeight>;

struct Rect
{
	int row = 0;
	int col = 0;
	int height = 0;
	int width = 0;

	bool operator==(const Rect &) const = default;
	bool contains(int r, int c) const
	{
		return r >= row && r < row + height && c >= col && c < col + width;
	}
};

inline bool pixel_less(const PixelWeight &a, const PixelWeight &b)
{
	return a.row != b.row ? a.row < b.row : a.col < b.col;
}

// Sorts by pixel and collapses duplicates, keeping the larger weight.
void normalize_footprint(Footprint &fp);

Rect bounding_box(const Footprint &fp);

double footprint_peak(const Footprint &fp);

// Scales weights so the largest is 1. Empty or all-zero footprints are left alone.
void scale_to_unit_peak(Footprint &fp);

// Pearson correlation; 0 when either series is constant.
double pearson(const std::vector<double> &a, const std::vector<double> &b);

} // namespace seudo
