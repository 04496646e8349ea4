#pragma once

// Field-of-view tiling, one discovery pipeline per patch, and gluing of the
// partial profiles that patches report for cells straddling their borders.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seudo/pipeline.hpp"
#include "seudo/thread_pool.hpp"

namespace seudo {

struct Patch
{
	int grid_row = 0;
	int grid_col = 0;
	// Tile owned by this patch; tiles cover the frame exactly once.
	Rect core;
	// Pixels the patch pipeline sees: core grown by the margin, clipped.
	Rect region;
	// One-pixel bands just inside the region border: top, bottom, left, right.
	std::vector<Rect> perimeter;
};

struct PatchLayout
{
	FrameGeometry frame;
	int patch_size = 80;
	int margin = 0;
	int rows = 0;
	int cols = 0;
	// Row-major.
	std::vector<Patch> patches;

	const Patch &at(int r, int c) const { return patches[std::size_t(r) * cols + c]; }
};

// patch_size must be >= 16; sizes beyond a frame dimension give one patch
// along that dimension. The last row and column may be smaller.
PatchLayout partition(FrameGeometry frame, int patch_size, int margin = 0);

// Two edge-adjacent patches: b is right of a (vertical seam) or below it.
struct Seam
{
	std::size_t a = 0;
	std::size_t b = 0;
	bool vertical = true;
};

std::vector<Seam> seams(const PatchLayout &layout);

// Restriction of a frame-coordinate footprint to where it meets the seam. With
// zero margin this is the footprint's pixels in the patch's border line,
// projected onto the seam axis so both sides share coordinates; with a margin
// it is the part inside the two regions' intersection.
Footprint seam_restriction(const Footprint &fp, const PatchLayout &layout, const Seam &seam, bool side_a);

enum class MatchTier
{
	asymmetric = 1,
	spatial_sym_temporal_asym = 2,
	bidirectional = 3,
};

const char *tier_name(MatchTier tier);

struct GlueConfig
{
	double tau_glue = 0.6;
	double tau_corr = 0.5;
	// Both directional spatial scores at least this → spatially symmetric.
	double tau_same = 0.9;
	// A frame is active for a trace above this fraction of the trace maximum.
	double active_fraction = 0.2;
	// Fewer common active frames leaves the temporal score undefined.
	int min_common_active = 5;
	// Each side's active frames must be at least this much shared for the
	// temporal match to count as symmetric.
	double temporal_containment = 0.5;

	void validate() const;
};

struct BorderProfile
{
	ProfileId id = 0;
	// Frame coordinates.
	Footprint pixels;
	std::vector<double> trace;
};

struct BorderMatch
{
	ProfileId profile_a = 0;
	ProfileId profile_b = 0;
	MatchTier tier = MatchTier::asymmetric;
	double rho_ab = 0.;
	double rho_ba = 0.;
	// Larger of the two directional scores.
	double spatial_score = 0.;
	// Pearson correlation over frames where either trace is active.
	double temporal_score = 0.;
	bool temporal_defined = false;
};

std::optional<BorderMatch> match_across_patches(const BorderProfile &a, const BorderProfile &b, const PatchLayout &layout, const Seam &seam, const GlueConfig &config);

struct PatchEngineConfig
{
	PipelineConfig pipeline;
	int patch_size = 80;
	int margin = 0;
	GlueConfig glue;
	// Worker threads including the caller; 0 means hardware concurrency.
	int threads = 1;

	void validate() const;
};

struct GlobalProfile
{
	ProfileId id = 0;
	Footprint pixels;
	// (patch index, patch-local id) of the live members.
	std::vector<std::pair<std::size_t, ProfileId>> members;
};

struct EngineFrame
{
	std::int64_t frame_index = 0;
	// Global ids, one event per global profile, sorted by id.
	std::vector<DetectionEvent> events;
	bool failed = false;
	std::vector<std::string> errors;
};

class PatchEngine
{
public:
	PatchEngine(FrameGeometry frame, PatchEngineConfig config);

	// Processes one frame across all patches; returns after every patch is done.
	EngineFrame process(const Image &frame);

	const PatchLayout &layout() const { return layout_; }
	const PatchEngineConfig &config() const { return config_; }
	std::int64_t frames_processed() const { return frames_; }
	std::size_t threads() const { return pool_->size(); }

	// Stable profiles after gluing, sorted by id.
	std::vector<GlobalProfile> profiles() const;
	// Per-frame max of the member traces, for every global stable profile.
	std::map<ProfileId, std::vector<double>> traces() const;
	// Every seam match that has been applied, in application order.
	const std::vector<BorderMatch> &matches() const { return matches_; }
	const PatchPipeline &patch(std::size_t i) const { return *pipelines_[i]; }

private:
	using LocalKey = std::pair<std::size_t, ProfileId>;

	ProfileId global_of(const LocalKey &key);
	ProfileId root(ProfileId id) const;
	void unite(ProfileId a, ProfileId b);
	Footprint to_frame(std::size_t patch, const Footprint &local) const;
	void glue_seams();

	FrameGeometry frame_;
	PatchEngineConfig config_;
	PatchLayout layout_;
	std::vector<Seam> seams_;
	std::unique_ptr<ThreadPool> pool_;
	std::vector<std::unique_ptr<PatchPipeline>> pipelines_;
	std::int64_t frames_ = 0;
	std::map<LocalKey, ProfileId> global_;
	std::map<ProfileId, ProfileId> parent_;
	ProfileId next_global_ = 1;
	std::vector<BorderMatch> matches_;
};

} // namespace seudo
