#include "seudo/profile_manager.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace seudo {

void ManagerConfig::validate() const
{
	if (!(k_temp > 0. && k_temp <= 1.))
		throw Error("k_temp must be in (0, 1]");
	if (!(unique_perimeter_fraction >= 0.))
		throw Error("unique_perimeter_fraction must be non-negative");
	if (quiet_frames < 1 || min_active < 1)
		throw Error("quiet_frames and min_active must be at least 1");
	if (!(tau_same > 0. && tau_same <= 1. && tau_inside > 0. && tau_inside <= 1.))
		throw Error("tau_same and tau_inside must be in (0, 1]");
	if (!(tau_bright > 0.))
		throw Error("tau_bright must be positive");
	if (min_area < 1)
		throw Error("min_area must be at least 1");
}

namespace {

int perimeter(const Footprint &fp)
{
	if (fp.empty())
		return 0;
	Rect r = bounding_box(fp);
	return 2 * (r.width + r.height);
}

// Visits pixels of two sorted footprints: fn(weight_a, weight_b), with 0 for a missing side.
template <class Fn>
void walk_pair(const Footprint &a, const Footprint &b, Fn fn)
{
	std::size_t i = 0, j = 0;
	while (i < a.size() || j < b.size()) {
		if (j == b.size() || (i < a.size() && pixel_less(a[i], b[j]))) {
			fn(a[i], a[i].weight, 0.);
			i++;
		} else if (i == a.size() || pixel_less(b[j], a[i])) {
			fn(b[j], 0., b[j].weight);
			j++;
		} else {
			fn(a[i], a[i].weight, b[j].weight);
			i++;
			j++;
		}
	}
}

int common_pixels(const Footprint &a, const Footprint &b)
{
	int c = 0;
	walk_pair(a, b, [&](const PixelWeight &, double wa, double wb) {
		if (wa > 0. && wb > 0.)
			c++;
	});
	return c;
}

} // namespace

MergeStats merge_stats(const Footprint &a, const Footprint &b)
{
	MergeStats s;
	s.P1 = int(a.size());
	s.P2 = int(b.size());
	std::size_t i = 0, j = 0;
	while (i < a.size() && j < b.size()) {
		if (pixel_less(a[i], b[j]))
			i++;
		else if (pixel_less(b[j], a[i]))
			j++;
		else {
			s.C++;
			i++;
			j++;
		}
	}
	s.U1 = s.P1 - s.C;
	s.U2 = s.P2 - s.C;
	s.B1 = perimeter(a);
	s.B2 = perimeter(b);
	return s;
}

bool temp_merge_test(const MergeStats &s, const ManagerConfig &config)
{
	return s.U1 <= s.B1 * config.unique_perimeter_fraction || s.U2 <= s.B2 * config.unique_perimeter_fraction
		|| s.C >= config.k_temp * std::min(s.P1, s.P2);
}

bool temp_merge_test(const Profile &a, const Profile &b, const ManagerConfig &config)
{
	return temp_merge_test(merge_stats(a.pixels, b.pixels), config);
}

Profile merge_profiles(const Profile &a, const Profile &b)
{
	Profile out;
	out.id = std::min(a.id, b.id);
	out.state = a.state == ProfileState::stable || b.state == ProfileState::stable ? ProfileState::stable : ProfileState::temporary;
	out.birth_frame = std::min(a.birth_frame, b.birth_frame);
	out.last_active_frame = std::max(a.last_active_frame, b.last_active_frame);
	out.activity_count = std::max(a.activity_count, b.activity_count);
	out.activation_total = std::max(a.activation_total, b.activation_total);
	out.pixels.reserve(a.pixels.size() + b.pixels.size());
	walk_pair(a.pixels, b.pixels, [&](const PixelWeight &p, double wa, double wb) {
		out.pixels.push_back({p.row, p.col, std::max(wa, wb)});
	});
	return out;
}

PairScore pair_score(const Footprint &a, const Footprint &b)
{
	double ab = 0., aa = 0., bb = 0., aa_ol = 0., bb_ol = 0.;
	walk_pair(a, b, [&](const PixelWeight &, double wa, double wb) {
		aa += wa * wa;
		bb += wb * wb;
		if (wa != 0. && wb != 0.) {
			ab += wa * wb;
			aa_ol += wa * wa;
			bb_ol += wb * wb;
		}
	});
	if (aa_ol == 0. || bb_ol == 0.)
		throw Error("degenerate overlap");
	PairScore s;
	// Outside the overlap one of the two weights is zero, so <A,B> = <A_ol,B>.
	s.alpha_AB = ab / aa;
	s.alpha_BA = ab / bb;
	s.beta_AB = ab / aa_ol;
	s.beta_BA = ab / bb_ol;
	s.rho_AB = std::min(1., s.alpha_AB / s.beta_AB);
	s.rho_BA = std::min(1., s.alpha_BA / s.beta_BA);
	return s;
}

Adjudication stable_adjudicate(const Profile &a, const Profile &b, const PairScore &score, const ManagerConfig &config)
{
	const double hi = std::max(score.rho_AB, score.rho_BA), lo = std::min(score.rho_AB, score.rho_BA);
	if (lo >= config.tau_same)
		return {Action::merge, Role::none};
	if (hi < config.tau_inside)
		return {Action::keep_separate, Role::none};

	const bool a_inside = score.rho_AB >= score.rho_BA;
	const Profile &inner = a_inside ? a : b, &outer = a_inside ? b : a;
	double ratio = 1. / (a_inside ? score.beta_AB : score.beta_BA);
	if (config.brightness == BrightnessSource::activation && outer.mean_activation() > 0.)
		ratio = inner.mean_activation() / outer.mean_activation();
	Role role = a_inside ? Role::a : Role::b;
	return {ratio < config.tau_bright ? Action::merge : Action::split, role};
}

std::pair<Profile, std::optional<Profile>> split_profiles(const Profile &container, const Profile &contained, int min_area)
{
	Profile rest = container;
	rest.pixels.clear();
	walk_pair(container.pixels, contained.pixels, [&](const PixelWeight &p, double wa, double wb) {
		if (wa != 0. && wb == 0.)
			rest.pixels.push_back({p.row, p.col, wa});
	});
	if (int(rest.pixels.size()) < std::max(min_area, 1))
		return {contained, std::nullopt};
	return {contained, std::move(rest)};
}

ProfileManager::ProfileManager(ManagerConfig config)
	: config_(config)
{
	config_.validate();
}

const Profile *ProfileManager::find(ProfileId id) const
{
	for (const auto *set : {&temps_, &stables_})
		for (const auto &p : *set)
			if (p.id == id)
				return &p;
	return nullptr;
}

std::pair<ProfileId, std::vector<ProfileId>> ProfileManager::add_candidate(Footprint pixels, std::int64_t frame, double activation)
{
	normalize_footprint(pixels);
	if (pixels.empty())
		throw Error("candidate footprint is empty");
	Profile cand;
	cand.pixels = std::move(pixels);
	cand.birth_frame = frame;
	cand.last_active_frame = std::numeric_limits<std::int64_t>::min();
	cand.id = std::numeric_limits<ProfileId>::max();

	std::vector<ProfileId> absorbed;
	for (std::size_t i = 0; i < temps_.size();) {
		MergeStats s = merge_stats(cand.pixels, temps_[i].pixels);
		if (s.C > 0 && temp_merge_test(s, config_)) {
			cand = merge_profiles(cand, temps_[i]);
			absorbed.push_back(temps_[i].id);
			temps_.erase(temps_.begin() + i);
		} else {
			i++;
		}
	}
	if (absorbed.empty())
		cand.id = next_id_++;
	// The surviving id is the smallest; the others were absorbed into it.
	absorbed.erase(std::remove(absorbed.begin(), absorbed.end(), cand.id), absorbed.end());
	ProfileId id = cand.id;
	temps_.push_back(std::move(cand));
	mark_active(id, frame, activation);
	return {id, absorbed};
}

void ProfileManager::mark_active(ProfileId id, std::int64_t frame, double activation)
{
	for (auto *set : {&temps_, &stables_}) {
		for (auto &p : *set) {
			if (p.id != id)
				continue;
			if (p.last_active_frame < frame) {
				p.last_active_frame = frame;
				p.activity_count++;
				p.activation_total += activation;
			}
			return;
		}
	}
	throw Error("unknown profile id");
}

std::vector<ProfileChange> ProfileManager::promote_stale(std::int64_t current_frame)
{
	std::vector<ProfileChange> changes;
	std::vector<Profile> ready;
	for (std::size_t i = 0; i < temps_.size();) {
		Profile &p = temps_[i];
		if (current_frame - p.last_active_frame < config_.quiet_frames) {
			i++;
			continue;
		}
		if (p.activity_count < config_.min_active) {
			changes.push_back({ChangeKind::discarded, p.id, 0});
		} else {
			changes.push_back({ChangeKind::promoted, p.id, 0});
			p.state = ProfileState::stable;
			ready.push_back(std::move(p));
		}
		temps_.erase(temps_.begin() + i);
	}
	for (auto &p : ready)
		adjudicate_into_stables(std::move(p), changes);
	return changes;
}

std::vector<ProfileChange> ProfileManager::insert_stable(Profile p)
{
	normalize_footprint(p.pixels);
	if (p.pixels.empty())
		throw Error("profile footprint is empty");
	if (p.id == 0)
		p.id = next_id_++;
	next_id_ = std::max(next_id_, p.id + 1);
	p.state = ProfileState::stable;
	std::vector<ProfileChange> changes;
	adjudicate_into_stables(std::move(p), changes);
	return changes;
}

void ProfileManager::adjudicate_into_stables(Profile p, std::vector<ProfileChange> &changes)
{
	std::vector<Profile> queue{std::move(p)};
	while (!queue.empty()) {
		Profile x = std::move(queue.back());
		queue.pop_back();
		bool alive = true;
		bool restart = true;
		while (alive && restart) {
			restart = false;
			for (std::size_t i = 0; i < stables_.size(); i++) {
				if (common_pixels(x.pixels, stables_[i].pixels) == 0)
					continue;
				PairScore score;
				try {
					score = pair_score(x, stables_[i]);
				} catch (const Error &) {
					continue;
				}
				Adjudication adj = stable_adjudicate(x, stables_[i], score, config_);
				if (adj.action == Action::keep_separate)
					continue;
				Profile s = std::move(stables_[i]);
				stables_.erase(stables_.begin() + i);
				if (adj.action == Action::merge) {
					Profile m = merge_profiles(x, s);
					changes.push_back({ChangeKind::merged, m.id, m.id == x.id ? s.id : x.id});
					x = std::move(m);
				} else if (adj.contained == Role::a) {
					// x fits inside s: s is reduced to its remainder and re-entered.
					auto [kept, rest] = split_profiles(s, x, config_.min_area);
					if (rest) {
						changes.push_back({ChangeKind::split, s.id, 0});
						queue.push_back(std::move(*rest));
					} else {
						changes.push_back({ChangeKind::removed, s.id, 0});
					}
				} else {
					// s fits inside x: s stays, x is reduced to its remainder.
					auto [kept, rest] = split_profiles(x, s, config_.min_area);
					stables_.push_back(std::move(kept));
					if (rest) {
						changes.push_back({ChangeKind::split, x.id, 0});
						x = std::move(*rest);
					} else {
						changes.push_back({ChangeKind::removed, x.id, 0});
						alive = false;
					}
				}
				restart = true;
				break;
			}
		}
		if (alive)
			stables_.push_back(std::move(x));
	}
}

} // namespace seudo
