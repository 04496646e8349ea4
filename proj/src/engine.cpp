#include "seudo/engine.hpp"

#include <algorithm>

#include "json.hpp"

namespace seudo {

using nlohmann::json;

void EngineConfig::validate() const
{
	engine.validate();
	if (max_consecutive_failures < 0)
		throw Error("max_consecutive_failures must be >= 0");
}

std::string config_to_json(const EngineConfig &cfg)
{
	const PipelineConfig &p = cfg.engine.pipeline;
	const ManagerConfig &m = p.manager;
	const GlueConfig &g = cfg.engine.glue;
	json detect = {
		{"k_sigma", p.detect.k_sigma},
		{"min_area", p.detect.min_area},
		{"connectivity", p.detect.connectivity == Connectivity::four ? 4 : 8},
		{"grow_k_sigma", p.detect.grow_k_sigma ? json(*p.detect.grow_k_sigma) : json(nullptr)},
	};
	json doc = {
		{"lambda", p.lambda},
		{"gamma", p.gamma},
		{"gamma_detect", p.gamma_detect},
		{"suppress_near_active", p.suppress_near_active},
		{"kernel", {{"radius", p.kernel_radius}, {"stride", p.kernel_stride}, {"sigma", p.kernel_sigma}}},
		{"denoise", {{"window", p.denoise.window}, {"spatial_sigma", p.denoise.spatial_sigma}}},
		{"sections", {{"rows", p.sections.rows}, {"cols", p.sections.cols}}},
		{"detect", detect},
		{"manager",
		 {
			 {"k_temp", m.k_temp},
			 {"unique_perimeter_fraction", m.unique_perimeter_fraction},
			 {"quiet_frames", m.quiet_frames},
			 {"min_active", m.min_active},
			 {"tau_same", m.tau_same},
			 {"tau_inside", m.tau_inside},
			 {"tau_bright", m.tau_bright},
			 {"min_area", m.min_area},
			 {"brightness", m.brightness == BrightnessSource::footprint ? "footprint" : "activation"},
		 }},
		{"solver",
		 {
			 {"tol", p.solver.tol},
			 {"max_iter", p.solver.max_iter},
			 {"window", p.solver.window},
			 {"momentum", p.solver.momentum == MomentumSchedule::fixed_unit ? "fixed_unit" : "fista"},
		 }},
		{"patch", {{"size", cfg.engine.patch_size}, {"margin", cfg.engine.margin}}},
		{"glue",
		 {
			 {"tau_glue", g.tau_glue},
			 {"tau_corr", g.tau_corr},
			 {"tau_same", g.tau_same},
			 {"active_fraction", g.active_fraction},
			 {"min_common_active", g.min_common_active},
			 {"temporal_containment", g.temporal_containment},
		 }},
		{"threads", cfg.engine.threads},
		{"max_consecutive_failures", cfg.max_consecutive_failures},
	};
	return doc.dump(2);
}

namespace {

// Reads the keys of one object, each at most once, and rejects the rest.
class Reader
{
public:
	Reader(const json &obj, std::string path) : obj_(obj), path_(std::move(path))
	{
		if (!obj_.is_object())
			throw Error("config: " + where() + " must be an object");
	}

	template <class T>
	void get(const char *key, T &out)
	{
		seen_.push_back(key);
		auto it = obj_.find(key);
		if (it == obj_.end())
			return;
		try {
			out = it->template get<T>();
		} catch (const json::exception &) {
			throw Error("config: bad value for " + name(key));
		}
	}

	Reader sub(const char *key)
	{
		seen_.push_back(key);
		static const json empty = json::object();
		auto it = obj_.find(key);
		return Reader(it == obj_.end() ? empty : *it, name(key));
	}

	const json *raw(const char *key)
	{
		seen_.push_back(key);
		auto it = obj_.find(key);
		return it == obj_.end() ? nullptr : &*it;
	}

	std::string name(const char *key) const { return path_.empty() ? key : path_ + "." + key; }

	void finish() const
	{
		for (auto it = obj_.begin(); it != obj_.end(); ++it)
			if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
				throw Error("config: unknown key " + name(it.key().c_str()));
	}

private:
	std::string where() const { return path_.empty() ? "top level" : path_; }

	const json &obj_;
	std::string path_;
	std::vector<std::string> seen_;
};

} // namespace

EngineConfig config_from_json(const std::string &text)
{
	json doc;
	try {
		doc = json::parse(text);
	} catch (const json::exception &e) {
		throw Error(std::string("config: not valid JSON: ") + e.what());
	}
	EngineConfig cfg;
	PipelineConfig &p = cfg.engine.pipeline;
	ManagerConfig &m = p.manager;
	GlueConfig &g = cfg.engine.glue;

	Reader top(doc, "");
	top.get("lambda", p.lambda);
	top.get("gamma", p.gamma);
	top.get("gamma_detect", p.gamma_detect);
	top.get("suppress_near_active", p.suppress_near_active);
	top.get("threads", cfg.engine.threads);
	top.get("max_consecutive_failures", cfg.max_consecutive_failures);

	Reader kernel = top.sub("kernel");
	kernel.get("radius", p.kernel_radius);
	kernel.get("stride", p.kernel_stride);
	kernel.get("sigma", p.kernel_sigma);
	kernel.finish();

	Reader den = top.sub("denoise");
	den.get("window", p.denoise.window);
	den.get("spatial_sigma", p.denoise.spatial_sigma);
	den.finish();

	Reader sec = top.sub("sections");
	sec.get("rows", p.sections.rows);
	sec.get("cols", p.sections.cols);
	sec.finish();

	Reader det = top.sub("detect");
	det.get("k_sigma", p.detect.k_sigma);
	det.get("min_area", p.detect.min_area);
	int conn = p.detect.connectivity == Connectivity::four ? 4 : 8;
	det.get("connectivity", conn);
	if (conn != 4 && conn != 8)
		throw Error("config: detect.connectivity must be 4 or 8");
	p.detect.connectivity = conn == 4 ? Connectivity::four : Connectivity::eight;
	if (const json *grow = det.raw("grow_k_sigma")) {
		if (grow->is_null())
			p.detect.grow_k_sigma.reset();
		else if (grow->is_number())
			p.detect.grow_k_sigma = grow->get<double>();
		else
			throw Error("config: bad value for detect.grow_k_sigma");
	}
	det.finish();

	Reader man = top.sub("manager");
	man.get("k_temp", m.k_temp);
	man.get("unique_perimeter_fraction", m.unique_perimeter_fraction);
	man.get("quiet_frames", m.quiet_frames);
	man.get("min_active", m.min_active);
	man.get("tau_same", m.tau_same);
	man.get("tau_inside", m.tau_inside);
	man.get("tau_bright", m.tau_bright);
	man.get("min_area", m.min_area);
	std::string bright = m.brightness == BrightnessSource::footprint ? "footprint" : "activation";
	man.get("brightness", bright);
	if (bright != "footprint" && bright != "activation")
		throw Error("config: manager.brightness must be \"footprint\" or \"activation\"");
	m.brightness = bright == "footprint" ? BrightnessSource::footprint : BrightnessSource::activation;
	man.finish();

	Reader sol = top.sub("solver");
	sol.get("tol", p.solver.tol);
	sol.get("max_iter", p.solver.max_iter);
	sol.get("window", p.solver.window);
	std::string mom = p.solver.momentum == MomentumSchedule::fixed_unit ? "fixed_unit" : "fista";
	sol.get("momentum", mom);
	if (mom != "fixed_unit" && mom != "fista")
		throw Error("config: solver.momentum must be \"fixed_unit\" or \"fista\"");
	p.solver.momentum = mom == "fixed_unit" ? MomentumSchedule::fixed_unit : MomentumSchedule::fista;
	sol.finish();

	Reader patch = top.sub("patch");
	patch.get("size", cfg.engine.patch_size);
	patch.get("margin", cfg.engine.margin);
	patch.finish();

	Reader glue = top.sub("glue");
	glue.get("tau_glue", g.tau_glue);
	glue.get("tau_corr", g.tau_corr);
	glue.get("tau_same", g.tau_same);
	glue.get("active_fraction", g.active_fraction);
	glue.get("min_common_active", g.min_common_active);
	glue.get("temporal_containment", g.temporal_containment);
	glue.finish();

	top.finish();
	cfg.validate();
	return cfg;
}

Engine::Engine(FrameGeometry frame, EngineConfig config)
	: frame_(frame), config_(std::move(config))
{
	config_.validate();
	core_ = std::make_unique<PatchEngine>(frame_, config_.engine);
}

void Engine::check_open() const
{
	if (closed_)
		throw Error("engine is closed");
}

std::int64_t Engine::frames_processed() const
{
	return core_->frames_processed();
}

const PatchEngine &Engine::core() const
{
	return *core_;
}

EngineFrame Engine::push_frame(const Image &frame)
{
	check_open();
	if (!(frame.geometry() == frame_))
		throw Error("frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) + ", engine expects " + std::to_string(frame_.width) + "x" + std::to_string(frame_.height));
	EngineFrame out = core_->process(frame);
	consecutive_failures_ = out.failed ? consecutive_failures_ + 1 : 0;
	if (consecutive_failures_ > config_.max_consecutive_failures) {
		closed_ = true;
		throw Error("aborting after " + std::to_string(consecutive_failures_) + " consecutive failed frames");
	}
	return out;
}

EngineFrame Engine::push_frame(std::span<const float> pixels)
{
	check_open();
	if (pixels.size() != frame_.pixels())
		throw Error("frame has " + std::to_string(pixels.size()) + " pixels, engine expects " + std::to_string(frame_.pixels()));
	Image img(frame_.width, frame_.height);
	std::copy(pixels.begin(), pixels.end(), img.pixels.begin());
	return push_frame(img);
}

Snapshot Engine::snapshot() const
{
	check_open();
	return {core_->profiles(), core_->traces(), core_->frames_processed()};
}

} // namespace seudo
