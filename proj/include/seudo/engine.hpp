#pragma once

// Streaming engine entry point: one frame in, detection events out.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "seudo/patch_engine.hpp"

namespace seudo {

struct EngineConfig
{
	PatchEngineConfig engine;
	// More failed frames in a row than this aborts the stream.
	int max_consecutive_failures = 10;

	void validate() const;
};

// JSON text with every tunable. Parsing fills missing keys with defaults and
// rejects unknown keys, naming them.
std::string config_to_json(const EngineConfig &config);
EngineConfig config_from_json(const std::string &text);

struct Snapshot
{
	std::vector<GlobalProfile> profiles;
	std::map<ProfileId, std::vector<double>> traces;
	std::int64_t frames = 0;
};

class Engine
{
public:
	Engine(FrameGeometry frame, EngineConfig config = {});

	// Synchronous: all events for this frame are in the result. Throws on a
	// shape mismatch, on a closed engine, and when the failure budget is spent.
	EngineFrame push_frame(const Image &frame);
	EngineFrame push_frame(std::span<const float> pixels);

	Snapshot snapshot() const;
	std::string export_config() const { return config_to_json(config_); }

	FrameGeometry geometry() const { return frame_; }
	const EngineConfig &config() const { return config_; }
	std::int64_t frames_processed() const;
	const PatchEngine &core() const;

	void close() { closed_ = true; }
	bool closed() const { return closed_; }

private:
	void check_open() const;

	FrameGeometry frame_;
	EngineConfig config_;
	std::unique_ptr<PatchEngine> core_;
	int consecutive_failures_ = 0;
	bool closed_ = false;
};

} // namespace seudo
