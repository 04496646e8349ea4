#pragma once

// Streaming discovery loop for one patch: denoise, robust activation of the
// stable profiles, robust activation of the temporary profiles on what is
// left, candidate detection, promotion.

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "seudo/frame_pipeline.hpp"
#include "seudo/profile_manager.hpp"
#include "seudo/seudo_model.hpp"

namespace seudo {

enum class EventKind
{
	stable,
	early,
};

struct DetectionEvent
{
	std::int64_t frame_index = 0;
	ProfileId profile_id = 0;
	// Activation in brightness units (footprints are unit-peak for the fit).
	double phi = 0.;
	EventKind kind = EventKind::stable;

	bool operator==(const DetectionEvent &) const = default;
};

struct PipelineConfig
{
	DenoiseConfig denoise;
	SectionGrid sections;
	// Growth defaults to 1 sigma_half so footprints cover dim cell rims.
	DetectConfig detect{3., 4, Connectivity::four, 1.};
	ManagerConfig manager;
	int kernel_radius = 2;
	int kernel_stride = 2;
	double kernel_sigma = 0.;
	// Noise-relative penalties; absolute values scale with the frame's mean
	// sigma_half s: lambda * s on the bump l1 term, gamma * s^2 on the bump
	// branch, gamma_detect * s as the activity threshold.
	double lambda = 4.;
	double gamma = 20.;
	double gamma_detect = 2.;
	// No new seeds on or next to stable profiles active in the frame.
	bool suppress_near_active = true;
	SolverConfig solver;

	void validate() const;
};

struct FrameOutput
{
	std::int64_t frame_index = 0;
	std::vector<DetectionEvent> events;
	std::vector<ProfileChange> changes;
	double sigma_half = 0.;
	bool failed = false;
	std::string error;
};

class ThreadPool;

class PatchPipeline
{
public:
	// The pool, when given, parallelizes the solves inside one frame.
	PatchPipeline(FrameGeometry geometry, PipelineConfig config, ThreadPool *pool = nullptr);

	// Processes the next frame. Module errors are caught: the output is marked
	// failed, no events are produced and the frame still counts.
	FrameOutput process(const Image &frame);

	FrameGeometry geometry() const { return geometry_; }
	const PipelineConfig &config() const { return config_; }
	std::int64_t frames_processed() const { return frame_index_; }
	// Raw frames held for denoising; never more than the denoise window.
	std::size_t frames_buffered() const { return history_.size(); }
	const ProfileManager &profiles() const { return manager_; }
	// Per-profile activation for every processed frame, zero before birth.
	const std::map<ProfileId, std::vector<double>> &traces() const { return traces_; }

private:
	FrameOutput step(const Image &frame);
	void apply_changes(const std::vector<ProfileChange> &changes);
	std::vector<double> &trace(ProfileId id);

	FrameGeometry geometry_;
	PipelineConfig config_;
	ThreadPool *pool_;
	KernelGrid grid_;
	ProfileManager manager_;
	std::deque<Image> history_;
	std::int64_t frame_index_ = 0;
	std::map<ProfileId, std::vector<double>> traces_;
	// Temporaries already reported as early detections.
	std::vector<ProfileId> reported_;
	// Previous activations for warm starts.
	std::map<ProfileId, double> last_phi_;
	std::vector<double> last_stable_c_;
	std::vector<double> last_temp_c_;
};

} // namespace seudo
