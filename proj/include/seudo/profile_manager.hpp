#pragma once

// Temporary and stable profile sets of one patch: candidate merging,
// promotion of quiet temporaries, and merge/split adjudication of stables.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "seudo/common.hpp"

namespace seudo {

using ProfileId = std::uint64_t;

enum class ProfileState
{
	temporary,
	stable,
};

// Footprint weights are in raw brightness units (height above background).
struct Profile
{
	ProfileId id = 0;
	Footprint pixels;
	ProfileState state = ProfileState::temporary;
	std::int64_t birth_frame = 0;
	std::int64_t last_active_frame = 0;
	int activity_count = 0;
	// Sum of reported activation amplitudes over active frames.
	double activation_total = 0.;

	double mean_activation() const { return activity_count > 0 ? activation_total / activity_count : 0.; }
};

struct MergeStats
{
	int P1 = 0, P2 = 0;
	int U1 = 0, U2 = 0;
	int C = 0;
	// Bounding-box perimeters, 2 * (width + height).
	int B1 = 0, B2 = 0;
};

MergeStats merge_stats(const Footprint &a, const Footprint &b);

struct PairScore
{
	double alpha_AB = 0., alpha_BA = 0.;
	double beta_AB = 0., beta_BA = 0.;
	double rho_AB = 0., rho_BA = 0.;
};

enum class BrightnessSource
{
	footprint,
	activation,
};

struct ManagerConfig
{
	double k_temp = 0.75;
	double unique_perimeter_fraction = 0.5;
	int quiet_frames = 5;
	int min_active = 3;
	double tau_same = 0.9;
	double tau_inside = 0.95;
	double tau_bright = 0.7;
	int min_area = 4;
	BrightnessSource brightness = BrightnessSource::footprint;

	void validate() const;
};

// U1 <= B1 * f or U2 <= B2 * f or C >= k_temp * min(P1, P2).
bool temp_merge_test(const MergeStats &s, const ManagerConfig &config = {});
bool temp_merge_test(const Profile &a, const Profile &b, const ManagerConfig &config = {});

// Union footprint with per-pixel max weight. The result keeps the smaller id,
// the earlier birth, and the larger of each activity counter.
Profile merge_profiles(const Profile &a, const Profile &b);

// Throws "degenerate overlap" when the footprints share no pixel with
// non-zero weight in both.
PairScore pair_score(const Footprint &a, const Footprint &b);
inline PairScore pair_score(const Profile &a, const Profile &b) { return pair_score(a.pixels, b.pixels); }

enum class Action
{
	keep_separate,
	merge,
	split,
};

enum class Role
{
	none,
	a,
	b,
};

struct Adjudication
{
	Action action = Action::keep_separate;
	// Which argument fits inside the other; none for symmetric outcomes.
	Role contained = Role::none;
};

// Brightness of the contained profile relative to its container. With the
// footprint source this is the overlap weight ratio 1 / beta; with the
// activation source the ratio of mean activation amplitudes.
Adjudication stable_adjudicate(const Profile &a, const Profile &b, const PairScore &score, const ManagerConfig &config = {});

// The contained profile survives as is; the container minus the overlap keeps
// the container id, or is dropped when smaller than min_area.
std::pair<Profile, std::optional<Profile>> split_profiles(const Profile &container, const Profile &contained, int min_area);

enum class ChangeKind
{
	promoted,
	discarded,
	merged,
	split,
	removed,
};

// Bookkeeping for per-profile data held outside the manager (traces).
// merged: `absorbed` folded into `survivor`. split: `survivor` was reduced to
// the container remainder. removed/discarded/promoted: `survivor` is the id.
struct ProfileChange
{
	ChangeKind kind;
	ProfileId survivor = 0;
	ProfileId absorbed = 0;
};

class ProfileManager
{
public:
	explicit ProfileManager(ManagerConfig config = {});

	const ManagerConfig &config() const { return config_; }
	const std::vector<Profile> &temporaries() const { return temps_; }
	const std::vector<Profile> &stables() const { return stables_; }
	const Profile *find(ProfileId id) const;

	// Merges the candidate into every overlapping temporary that passes the
	// merge test, or adds it as a new temporary. Returns the resulting id and
	// the ids absorbed along the way.
	std::pair<ProfileId, std::vector<ProfileId>> add_candidate(Footprint pixels, std::int64_t frame, double activation);

	// Records activity of a profile in a frame; repeated calls for the same
	// frame count once.
	void mark_active(ProfileId id, std::int64_t frame, double activation);

	// Moves every temporary quiet for quiet_frames into the stable set, or
	// discards it when it was active fewer than min_active frames. Promoted
	// profiles are adjudicated recursively against the stable set.
	std::vector<ProfileChange> promote_stale(std::int64_t current_frame);

	// Inserts an already stable profile and adjudicates it.
	std::vector<ProfileChange> insert_stable(Profile p);

private:
	void adjudicate_into_stables(Profile p, std::vector<ProfileChange> &changes);

	ManagerConfig config_;
	std::vector<Profile> temps_;
	std::vector<Profile> stables_;
	ProfileId next_id_ = 1;
};

} // namespace seudo
