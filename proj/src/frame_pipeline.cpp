#include "seudo/frame_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace seudo {

// ------------------- denoising -----------------------------

Image gaussian_blur(const Image &img, double sigma)
{
	if (sigma <= 0.)
		return img;
	const int R = std::max(1, int(std::ceil(3. * sigma)));
	std::vector<double> k(2 * R + 1);
	double sum = 0.;
	for (int i = -R; i <= R; i++) {
		k[i + R] = std::exp(-double(i * i) / (2. * sigma * sigma));
		sum += k[i + R];
	}
	for (double &v : k)
		v /= sum;

	const int W = img.width, H = img.height;
	Image tmp(W, H), out(W, H);
	for (int r = 0; r < H; r++) {
		for (int c = 0; c < W; c++) {
			double s = 0.;
			for (int i = -R; i <= R; i++)
				s += k[i + R] * img.at(r, std::clamp(c + i, 0, W - 1));
			tmp.at(r, c) = s;
		}
	}
	for (int r = 0; r < H; r++) {
		for (int c = 0; c < W; c++) {
			double s = 0.;
			for (int i = -R; i <= R; i++)
				s += k[i + R] * tmp.at(std::clamp(r + i, 0, H - 1), c);
			out.at(r, c) = s;
		}
	}
	return out;
}

Image denoise(std::span<const Image> history, const DenoiseConfig &config)
{
	if (history.empty())
		throw Error("denoise needs at least one frame");
	const std::size_t n = std::min<std::size_t>(std::max(config.window, 1), history.size());
	const Image &last = history.back();
	Image mean = last;
	if (n > 1) {
		for (std::size_t f = history.size() - n; f + 1 < history.size(); f++) {
			const Image &img = history[f];
			if (img.width != last.width || img.height != last.height)
				throw Error("frame geometry changed within the denoise window");
			for (std::size_t j = 0; j < mean.size(); j++)
				mean.pixels[j] += img.pixels[j];
		}
		for (double &v : mean.pixels)
			v /= double(n);
	}
	return gaussian_blur(mean, config.spatial_sigma);
}

// ------------------- noise estimate ------------------------

double median_of(std::vector<double> values)
{
	if (values.empty())
		return 0.;
	const std::size_t n = values.size();
	auto mid = values.begin() + n / 2;
	std::nth_element(values.begin(), mid, values.end());
	double hi = *mid;
	if (n % 2 == 1)
		return hi;
	double lo = *std::max_element(values.begin(), mid);
	return (lo + hi) / 2.;
}

double NoiseMap::mean_sigma_half() const
{
	if (sigma_half.empty())
		return 0.;
	double s = 0.;
	for (double v : sigma_half)
		s += v;
	return s / double(sigma_half.size());
}

namespace {

// Split [0, len) into n nearly equal parts; returns the n + 1 boundaries.
std::vector<int> split_axis(int len, int n)
{
	std::vector<int> b(n + 1);
	for (int i = 0; i <= n; i++)
		b[i] = int(std::int64_t(i) * len / n);
	return b;
}

// For coordinate p, the two neighbouring section centers and the blend.
struct Blend
{
	int i0, i1;
	double t;
};

std::vector<Blend> axis_blend(int len, const std::vector<int> &bounds)
{
	const int n = int(bounds.size()) - 1;
	std::vector<double> centers(n);
	for (int i = 0; i < n; i++)
		centers[i] = (bounds[i] + bounds[i + 1] - 1) / 2.;
	std::vector<Blend> out(len);
	for (int p = 0; p < len; p++) {
		if (n == 1 || p <= centers[0]) {
			out[p] = {0, 0, 0.};
		} else if (p >= centers[n - 1]) {
			out[p] = {n - 1, n - 1, 0.};
		} else {
			int i = 0;
			while (i + 1 < n && centers[i + 1] <= p)
				i++;
			double t = (p - centers[i]) / (centers[i + 1] - centers[i]);
			out[p] = {i, i + 1, t};
		}
	}
	return out;
}

} // namespace

NoiseMap estimate_noise(const Image &frame, SectionGrid sections)
{
	const int W = frame.width, H = frame.height;
	if (W < 1 || H < 1)
		throw Error("frame dimensions must be positive");
	int sr = std::clamp(sections.rows, 1, H), sc = std::clamp(sections.cols, 1, W);
	while ((H / sr) * (W / sc) < 16 && (sr > 1 || sc > 1)) {
		if (sr >= sc && sr > 1)
			sr--;
		else
			sc--;
	}

	NoiseMap nm;
	nm.geometry = frame.geometry();
	nm.sections = {sr, sc};
	auto rb = split_axis(H, sr), cb = split_axis(W, sc);

	std::vector<double> med(std::size_t(sr) * sc), mn(std::size_t(sr) * sc);
	std::vector<double> buf;
	for (int i = 0; i < sr; i++) {
		for (int j = 0; j < sc; j++) {
			buf.clear();
			for (int r = rb[i]; r < rb[i + 1]; r++)
				for (int c = cb[j]; c < cb[j + 1]; c++)
					buf.push_back(frame.at(r, c));
			mn[i * sc + j] = *std::min_element(buf.begin(), buf.end());
			med[i * sc + j] = median_of(std::move(buf));
			buf = {};
		}
	}

	auto rblend = axis_blend(H, rb), cblend = axis_blend(W, cb);
	auto interp = [&](const std::vector<double> &v, int r, int c) {
		const Blend &a = rblend[r], &b = cblend[c];
		double top = v[a.i0 * sc + b.i0] * (1. - b.t) + v[a.i0 * sc + b.i1] * b.t;
		double bot = v[a.i1 * sc + b.i0] * (1. - b.t) + v[a.i1 * sc + b.i1] * b.t;
		return top * (1. - a.t) + bot * a.t;
	};

	nm.local_median.resize(frame.size());
	nm.local_min.resize(frame.size());
	nm.sigma_half.resize(frame.size());
	for (int r = 0; r < H; r++) {
		for (int c = 0; c < W; c++) {
			std::size_t j = std::size_t(r) * W + c;
			nm.local_median[j] = interp(med, r, c);
			nm.local_min[j] = interp(mn, r, c);
			nm.sigma_half[j] = std::max(0., nm.local_median[j] - nm.local_min[j]);
		}
	}
	return nm;
}

// ------------------- detection -----------------------------

std::vector<CandidateProfile> detect_components(const Image &residual, const NoiseMap &noise, const DetectConfig &config, std::int64_t frame_index, const Image *grow_from)
{
	const int W = residual.width, H = residual.height;
	if (!(noise.geometry == residual.geometry()))
		throw Error("noise map geometry does not match the residual");
	const Image &grow = grow_from ? *grow_from : residual;
	if (!(grow.geometry() == residual.geometry()))
		throw Error("growth image geometry does not match the residual");

	// 2 = seed, 1 = growth only.
	std::vector<char> mask(residual.size(), 0);
	for (std::size_t j = 0; j < mask.size(); j++) {
		if (residual.pixels[j] > noise.local_median[j] + config.k_sigma * noise.sigma_half[j])
			mask[j] = 2;
		else if (config.grow_k_sigma && grow.pixels[j] > noise.local_median[j] + *config.grow_k_sigma * noise.sigma_half[j])
			mask[j] = 1;
	}

	static const int d4[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
	static const int d8[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
	const int (*dirs)[2] = config.connectivity == Connectivity::four ? d4 : d8;
	const int ndirs = config.connectivity == Connectivity::four ? 4 : 8;

	std::vector<CandidateProfile> out;
	std::vector<char> seen(mask.size(), 0);
	std::deque<std::pair<int, int>> queue;
	for (int r0 = 0; r0 < H; r0++) {
		for (int c0 = 0; c0 < W; c0++) {
			std::size_t j0 = std::size_t(r0) * W + c0;
			if (mask[j0] != 2 || seen[j0])
				continue;
			CandidateProfile cand;
			cand.birth_frame = frame_index;
			int seeds = 0;
			seen[j0] = 1;
			queue.emplace_back(r0, c0);
			while (!queue.empty()) {
				auto [r, c] = queue.front();
				queue.pop_front();
				std::size_t j = std::size_t(r) * W + c;
				double v = mask[j] == 2 ? std::max(residual.pixels[j], grow.pixels[j]) : grow.pixels[j];
				if (mask[j] == 2) {
					seeds++;
					if (!grow_from)
						v = residual.pixels[j];
				}
				cand.pixels.push_back({r, c, v - noise.local_median[j]});
				for (int d = 0; d < ndirs; d++) {
					int nr = r + dirs[d][0], nc = c + dirs[d][1];
					if (nr < 0 || nr >= H || nc < 0 || nc >= W)
						continue;
					std::size_t nj = std::size_t(nr) * W + nc;
					if (mask[nj] && !seen[nj]) {
						seen[nj] = 1;
						queue.emplace_back(nr, nc);
					}
				}
			}
			if (seeds < config.min_area)
				continue;
			normalize_footprint(cand.pixels);
			cand.bounding_box = bounding_box(cand.pixels);
			out.push_back(std::move(cand));
		}
	}
	return out;
}

} // namespace seudo
