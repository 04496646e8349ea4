#include "seudo/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace seudo {

void normalize_footprint(Footprint &fp)
{
	std::sort(fp.begin(), fp.end(), pixel_less);
	std::size_t out = 0;
	for (std::size_t i = 0; i < fp.size(); i++) {
		if (out > 0 && fp[out - 1].row == fp[i].row && fp[out - 1].col == fp[i].col) {
			fp[out - 1].weight = std::max(fp[out - 1].weight, fp[i].weight);
		} else {
			fp[out++] = fp[i];
		}
	}
	fp.resize(out);
}

Rect bounding_box(const Footprint &fp)
{
	if (fp.empty())
		return {};
	int r0 = std::numeric_limits<int>::max(), c0 = r0;
	int r1 = std::numeric_limits<int>::min(), c1 = r1;
	for (const auto &p : fp) {
		r0 = std::min(r0, p.row);
		r1 = std::max(r1, p.row);
		c0 = std::min(c0, p.col);
		c1 = std::max(c1, p.col);
	}
	return {r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

double footprint_peak(const Footprint &fp)
{
	double peak = 0.;
	for (const auto &p : fp)
		peak = std::max(peak, p.weight);
	return peak;
}

void scale_to_unit_peak(Footprint &fp)
{
	double peak = footprint_peak(fp);
	if (peak <= 0.)
		return;
	for (auto &p : fp)
		p.weight /= peak;
}

double pearson(const std::vector<double> &a, const std::vector<double> &b)
{
	std::size_t n = std::min(a.size(), b.size());
	if (n < 2)
		return 0.;
	double ma = 0., mb = 0.;
	for (std::size_t i = 0; i < n; i++) {
		ma += a[i];
		mb += b[i];
	}
	ma /= double(n);
	mb /= double(n);
	double sab = 0., saa = 0., sbb = 0.;
	for (std::size_t i = 0; i < n; i++) {
		double da = a[i] - ma, db = b[i] - mb;
		sab += da * db;
		saa += da * da;
		sbb += db * db;
	}
	if (saa <= 0. || sbb <= 0.)
		return 0.;
	return sab / std::sqrt(saa * sbb);
}

} // namespace seudo
