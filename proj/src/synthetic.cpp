#include "seudo/synthetic.hpp"

#include <algorithm>
#include <numbers>
#include <random>

#include "json.hpp"

namespace seudo {

void SyntheticConfig::validate() const
{
	if (width < 1 || height < 1)
		throw Error("synthetic dimensions must be positive");
	if (frames < 0 || n_cells < 0)
		throw Error("frames and n_cells must be non-negative");
	if (!(cell_radius_min > 0. && cell_radius_max >= cell_radius_min))
		throw Error("cell radius range must be positive and ordered");
	if (!(overlap_fraction >= 0. && overlap_fraction < 1.))
		throw Error("overlap_fraction must be in [0, 1)");
	if (!(amplitude > 0. && snr > 0.))
		throw Error("amplitude and snr must be positive");
	if (!(spike_rate >= 0. && rise_tau > 0. && decay_tau > 0.))
		throw Error("spike_rate must be non-negative and time constants positive");
	if (min_gap < 0)
		throw Error("min_gap must be non-negative");
	if (!centers.empty() && int(centers.size()) != n_cells)
		throw Error("centers must list one position per cell");
}

double calcium_kernel(double t, double rise_tau, double decay_tau)
{
	if (t <= 0.)
		return 0.;
	if (std::abs(rise_tau - decay_tau) < 1e-12)
		return t / decay_tau * std::exp(1. - t / decay_tau);
	const double peak_t = std::log(decay_tau / rise_tau) * decay_tau * rise_tau / (decay_tau - rise_tau);
	const double peak = std::exp(-peak_t / decay_tau) - std::exp(-peak_t / rise_tau);
	return (std::exp(-t / decay_tau) - std::exp(-t / rise_tau)) / peak;
}

namespace {

struct Ellipse
{
	double row, col, sr, sc, theta;
};

constexpr double support_level = 0.05;

Footprint render_ellipse(const Ellipse &e, int width, int height)
{
	Footprint fp;
	const double reach = std::sqrt(2. * std::log(1. / support_level)) * std::max(e.sr, e.sc);
	const double ct = std::cos(e.theta), st = std::sin(e.theta);
	for (int r = int(std::floor(e.row - reach)); r <= int(std::ceil(e.row + reach)); r++) {
		for (int c = int(std::floor(e.col - reach)); c <= int(std::ceil(e.col + reach)); c++) {
			if (r < 0 || r >= height || c < 0 || c >= width)
				continue;
			double dr = r - e.row, dc = c - e.col;
			double u = ct * dr + st * dc, v = -st * dr + ct * dc;
			double w = std::exp(-0.5 * (u * u / (e.sr * e.sr) + v * v / (e.sc * e.sc)));
			if (w >= support_level)
				fp.push_back({r, c, w});
		}
	}
	normalize_footprint(fp);
	scale_to_unit_peak(fp);
	return fp;
}

// Intersection area over the smaller area.
double overlap_ratio(const Footprint &a, const Footprint &b)
{
	std::size_t i = 0, j = 0, common = 0;
	while (i < a.size() && j < b.size()) {
		if (pixel_less(a[i], b[j]))
			i++;
		else if (pixel_less(b[j], a[i]))
			j++;
		else {
			common++;
			i++;
			j++;
		}
	}
	std::size_t m = std::min(a.size(), b.size());
	return m ? double(common) / double(m) : 0.;
}

class Occupancy
{
public:
	Occupancy(int w, int h, int gap)
		: w_(w), h_(h), gap_(gap), used_(std::size_t(w) * h, 0)
	{ }

	// True when every pixel is at least `gap` pixels (Chebyshev) from used
	// pixels and from the frame edge.
	bool free(const Footprint &fp) const
	{
		for (const auto &p : fp) {
			if (p.row < gap_ || p.col < gap_ || p.row >= h_ - gap_ || p.col >= w_ - gap_)
				return false;
			for (int r = std::max(0, p.row - gap_); r <= std::min(h_ - 1, p.row + gap_); r++)
				for (int c = std::max(0, p.col - gap_); c <= std::min(w_ - 1, p.col + gap_); c++)
					if (used_[std::size_t(r) * w_ + c])
						return false;
		}
		return true;
	}

	void mark(const Footprint &fp)
	{
		for (const auto &p : fp)
			used_[std::size_t(p.row) * w_ + p.col] = 1;
	}

private:
	int w_, h_, gap_;
	std::vector<char> used_;
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream)
{
	std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(stream >> 32)};
	std::uint32_t words[2];
	seq.generate(words, words + 2);
	return (std::uint64_t(words[0]) << 32) | words[1];
}

constexpr std::uint64_t placement_stream = 1;
constexpr std::uint64_t spike_stream = 2;
constexpr std::uint64_t noise_stream = 1000;

} // namespace

std::vector<double> generate_noise(const SyntheticConfig &config, std::size_t t)
{
	std::vector<double> out(std::size_t(config.width) * config.height, 0.);
	const double sd = config.noise_sigma();
	if (sd == 0.)
		return out;
	std::mt19937_64 rng(mix(config.seed, noise_stream + t));
	std::normal_distribution<double> n(0., sd);
	for (double &v : out)
		v = n(rng);
	return out;
}

Image GroundTruth::frame(std::size_t t) const
{
	Image img(config.width, config.height);
	const auto &f = video.at(t);
	for (std::size_t j = 0; j < f.size(); j++)
		img.pixels[j] = f[j];
	return img;
}

Image GroundTruth::clean_frame(std::size_t t) const
{
	Image img(config.width, config.height, config.background);
	for (std::size_t k = 0; k < cells.size(); k++) {
		double a = traces[k].at(t);
		if (a == 0.)
			continue;
		for (const auto &p : cells[k].footprint)
			img.at(p.row, p.col) += a * p.weight;
	}
	return img;
}

GroundTruth generate(const SyntheticConfig &config)
{
	config.validate();
	GroundTruth truth;
	truth.config = config;
	const int W = config.width, H = config.height;

	std::mt19937_64 place(mix(config.seed, placement_stream));
	std::uniform_real_distribution<double> radius(config.cell_radius_min, config.cell_radius_max);
	std::uniform_real_distribution<double> angle(0., std::numbers::pi);
	std::uniform_real_distribution<double> rowpos(0., H - 1.), colpos(0., W - 1.);

	auto random_shape = [&](double row, double col) {
		return Ellipse{row, col, radius(place), radius(place), angle(place)};
	};
	auto add_cell = [&](const Ellipse &e, const Footprint &fp) {
		TruthCell cell;
		cell.footprint = fp;
		cell.center_row = e.row;
		cell.center_col = e.col;
		cell.amplitude = config.amplitude;
		truth.cells.push_back(std::move(cell));
	};

	if (!config.centers.empty()) {
		for (auto [r, c] : config.centers) {
			Ellipse e = random_shape(r, c);
			Footprint fp = render_ellipse(e, W, H);
			if (fp.empty())
				throw Error("fixed cell center lies outside the frame");
			add_cell(e, fp);
		}
	} else {
		Occupancy occ(W, H, config.min_gap);
		const int attempts = 20000;
		const bool pairs = config.overlap_fraction > 0.;
		int placed = 0;
		while (placed < config.n_cells) {
			bool ok = false;
			const bool pair = pairs && placed + 1 < config.n_cells;
			for (int a = 0; a < attempts && !ok; a++) {
				Ellipse e1 = random_shape(rowpos(place), colpos(place));
				Footprint f1 = render_ellipse(e1, W, H);
				if (!occ.free(f1))
					continue;
				if (!pair) {
					occ.mark(f1);
					add_cell(e1, f1);
					placed++;
					ok = true;
					break;
				}
				Ellipse e2 = random_shape(0., 0.);
				const double dir = angle(place) * 2.;
				auto at = [&](double d) {
					Ellipse e = e2;
					e.row = e1.row + d * std::sin(dir);
					e.col = e1.col + d * std::cos(dir);
					return e;
				};
				// Overlap shrinks with distance; bisect for the target.
				double lo = 0., hi = 4. * (std::max(e1.sr, e1.sc) + std::max(e2.sr, e2.sc));
				if (overlap_ratio(f1, render_ellipse(at(lo), W, H)) < config.overlap_fraction)
					continue;
				for (int it = 0; it < 40; it++) {
					double mid = (lo + hi) / 2.;
					if (overlap_ratio(f1, render_ellipse(at(mid), W, H)) >= config.overlap_fraction)
						lo = mid;
					else
						hi = mid;
				}
				Ellipse e2p = at(lo);
				Footprint f2 = render_ellipse(e2p, W, H);
				if (std::abs(overlap_ratio(f1, f2) - config.overlap_fraction) > 0.05)
					continue;
				if (!occ.free(f2))
					continue;
				occ.mark(f1);
				occ.mark(f2);
				add_cell(e1, f1);
				add_cell(e2p, f2);
				placed += 2;
				ok = true;
			}
			if (!ok)
				throw Error("cannot place cells: frame too small for the requested layout");
		}
	}

	std::mt19937_64 spikes(mix(config.seed, spike_stream));
	std::poisson_distribution<int> count(config.spike_rate);
	const int T = config.frames;
	// Kernel support: until it decays below 1e-4 of its peak.
	int klen = 3;
	while (calcium_kernel(klen, config.rise_tau, config.decay_tau) > 1e-4)
		klen++;
	std::vector<double> kernel(klen);
	for (int i = 0; i < klen; i++)
		kernel[i] = calcium_kernel(i, config.rise_tau, config.decay_tau);
	truth.traces.assign(truth.cells.size(), std::vector<double>(T, 0.));
	for (std::size_t k = 0; k < truth.cells.size(); k++) {
		auto &tr = truth.traces[k];
		for (int s = 0; s < T; s++) {
			int n = config.spike_rate > 0. ? count(spikes) : 0;
			if (n == 0)
				continue;
			for (int i = 0; i < klen && s + i < T; i++)
				tr[s + i] += n * truth.cells[k].amplitude * kernel[i];
		}
	}

	truth.video.resize(T);
	for (int t = 0; t < T; t++) {
		Image clean = truth.clean_frame(t);
		auto noise = generate_noise(config, t);
		auto &f = truth.video[t];
		f.resize(clean.size());
		for (std::size_t j = 0; j < f.size(); j++)
			f[j] = float(clean.pixels[j] + noise[j]);
	}
	return truth;
}

// ------------------- manifest ------------------------------

using nlohmann::json;

std::string manifest_json(const GroundTruth &truth)
{
	const auto &c = truth.config;
	json cfg = {
		{"width", c.width},
		{"height", c.height},
		{"frames", c.frames},
		{"n_cells", c.n_cells},
		{"cell_radius_min", c.cell_radius_min},
		{"cell_radius_max", c.cell_radius_max},
		{"overlap_fraction", c.overlap_fraction},
		{"amplitude", c.amplitude},
		{"snr", std::isinf(c.snr) ? json("inf") : json(c.snr)},
		{"background", c.background},
		{"spike_rate", c.spike_rate},
		{"rise_tau", c.rise_tau},
		{"decay_tau", c.decay_tau},
		{"min_gap", c.min_gap},
		{"seed", c.seed},
		{"centers", c.centers},
	};
	json cells = json::array();
	for (std::size_t k = 0; k < truth.cells.size(); k++) {
		const auto &cell = truth.cells[k];
		json px = json::array();
		for (const auto &p : cell.footprint)
			px.push_back({p.row, p.col, p.weight});
		cells.push_back({
			{"center", {cell.center_row, cell.center_col}},
			{"amplitude", cell.amplitude},
			{"footprint", px},
			{"trace", truth.traces[k]},
		});
	}
	json doc = {{"format", "seudo-truth"}, {"version", 1}, {"config", cfg}, {"cells", cells}};
	return doc.dump();
}

GroundTruth parse_manifest(const std::string &text)
{
	GroundTruth truth;
	try {
		json doc = json::parse(text);
		if (doc.at("format") != "seudo-truth" || doc.at("version") != 1)
			throw Error("unsupported truth manifest format");
		const json &cfg = doc.at("config");
		auto &c = truth.config;
		c.width = cfg.at("width");
		c.height = cfg.at("height");
		c.frames = cfg.at("frames");
		c.n_cells = cfg.at("n_cells");
		c.cell_radius_min = cfg.at("cell_radius_min");
		c.cell_radius_max = cfg.at("cell_radius_max");
		c.overlap_fraction = cfg.at("overlap_fraction");
		c.amplitude = cfg.at("amplitude");
		c.snr = cfg.at("snr").is_string() ? std::numeric_limits<double>::infinity() : cfg.at("snr").get<double>();
		c.background = cfg.at("background");
		c.spike_rate = cfg.at("spike_rate");
		c.rise_tau = cfg.at("rise_tau");
		c.decay_tau = cfg.at("decay_tau");
		c.min_gap = cfg.at("min_gap");
		c.seed = cfg.at("seed");
		c.centers = cfg.at("centers").get<std::vector<std::pair<double, double>>>();
		for (const json &jc : doc.at("cells")) {
			TruthCell cell;
			cell.center_row = jc.at("center").at(0);
			cell.center_col = jc.at("center").at(1);
			cell.amplitude = jc.at("amplitude");
			for (const json &p : jc.at("footprint"))
				cell.footprint.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<double>()});
			truth.cells.push_back(std::move(cell));
			truth.traces.push_back(jc.at("trace").get<std::vector<double>>());
		}
	} catch (const json::exception &e) {
		throw Error(std::string("malformed truth manifest: ") + e.what());
	}
	return truth;
}

} // namespace seudo
