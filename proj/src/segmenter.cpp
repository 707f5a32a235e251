// Copyright 2026 The ionreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ionreadout/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "ionreadout/error.hpp"

namespace ionreadout::segmenter {

void SegmenterConfig::validate() const {
    if (!(t_low > 0.0) || !(t_high > t_low) || !std::isfinite(t_high))
        throw ConfigError("segmenter: need 0 < t_low < t_high");
    if (confirm_photons < 1) throw ConfigError("segmenter: confirm_photons must be >= 1");
    if (roi_half < 0) throw ConfigError("segmenter: roi_half must be >= 0");
}

const char* to_string(Label label) {
    switch (label) {
    case Label::Bright: return "bright";
    case Label::Dark: return "dark";
    case Label::Excluded: return "excluded";
    }
    return "unknown";
}

int roi_of(double x, double y, const std::vector<sim::Site>& sites, int roi_half) {
    const int px = pixel_of(x);
    const int py = pixel_of(y);
    int best = -1;
    double best_d = 0.0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (std::abs(px - sites[i].col) > roi_half || std::abs(py - sites[i].row) > roi_half) continue;
        const double dx = x - sites[i].col;
        const double dy = y - sites[i].row;
        const double d = dx * dx + dy * dy;
        if (best < 0 || d < best_d) {
            best = static_cast<int>(i);
            best_d = d;
        }
    }
    return best;
}

std::vector<std::vector<ticks_t>> assign_to_roi(const std::vector<sim::PhotonEvent>& photons,
                                                const std::vector<sim::Site>& sites, int roi_half) {
    std::vector<std::vector<ticks_t>> out(sites.size());
    for (const auto& p : photons) {
        const int k = roi_of(p.x, p.y, sites, roi_half);
        if (k >= 0) out[static_cast<std::size_t>(k)].push_back(p.t_ticks);
    }
    for (auto& v : out)
        if (!std::is_sorted(v.begin(), v.end())) std::sort(v.begin(), v.end());
    return out;
}

namespace {

class Segmenter {
public:
    Segmenter(int ion, const std::vector<ticks_t>& times, const SegmenterConfig& cfg)
        : ion_(ion), k_(static_cast<std::size_t>(cfg.confirm_photons)) {
        t_.reserve(times.size());
        for (auto v : times) t_.push_back(ticks_to_seconds(v));
        cls_ = classify_delays(times, cfg);
    }

    std::vector<StateInterval> run();

private:
    // Target bright needs K bright delays in a row; target dark needs K delays with no bright one.
    bool confirmed(std::size_t j, Evidence target) const {
        if (j + k_ >= cls_.size()) return false;
        for (std::size_t q = 1; q <= k_; ++q) {
            const Evidence c = cls_[j + q];
            if (target == Evidence::Bright ? c != Evidence::Bright : c == Evidence::Bright) return false;
        }
        return true;
    }

    void emit(double a, double b, Label l) {
        if (b > a) out_.push_back({ion_, a, b, l});
    }

    int ion_;
    std::size_t k_;
    std::vector<double> t_;
    std::vector<Evidence> cls_;
    std::vector<StateInterval> out_;
};

Label label_of(Evidence e) { return e == Evidence::Bright ? Label::Bright : Label::Dark; }

std::vector<StateInterval> Segmenter::run() {
    const std::size_t n = t_.size();
    if (n < k_ + 2) {
        if (n >= 2) emit(t_.front(), t_.back(), Label::Excluded);
        return out_;
    }
    const std::size_t m = cls_.size();
    bool known = false;
    Evidence state = Evidence::Gap;
    double cur_start = t_[0];
    double good_end = t_[0];
    double excl_start = t_[0];

    // Closes the current labeled run at good_end and returns where exclusion starts.
    auto close_current = [&]() {
        if (good_end > cur_start) {
            emit(cur_start, good_end, label_of(state));
            return good_end;
        }
        return cur_start;
    };

    std::size_t j = 0;
    while (j < m) {
        const Evidence c = cls_[j];
        if (c == Evidence::Gap) {
            ++j;
            continue;
        }
        if (known && c == state) {
            if (state == Evidence::Bright) {
                // A bright run ends at the last photon of a bright pair.
                if (j > 0 && cls_[j - 1] == Evidence::Bright) good_end = t_[j + 1];
            } else {
                good_end = t_[j];
            }
            ++j;
            continue;
        }
        if (confirmed(j, c)) {
            if (known) excl_start = close_current();
            const double s0 = t_[j + k_ + 1];
            emit(excl_start, s0, Label::Excluded);
            known = true;
            state = c;
            cur_start = s0;
            good_end = s0;
            j += k_ + 1;
            continue;
        }
        if (known && state == Evidence::Bright) {
            // Unconfirmed dark evidence: cut the bright run; either state must be confirmed anew.
            excl_start = close_current();
            known = false;
            ++j;
            continue;
        }
        ++j;
    }
    if (known) excl_start = close_current();
    emit(excl_start, t_[n - 1], Label::Excluded);
    return out_;
}

} // namespace

std::vector<Evidence> classify_delays(const std::vector<ticks_t>& times, const SegmenterConfig& cfg) {
    std::vector<Evidence> out;
    out.reserve(times.empty() ? 0 : times.size() - 1);
    for (std::size_t j = 0; j + 1 < times.size(); ++j) {
        const double d = ticks_to_seconds(times[j + 1]) - ticks_to_seconds(times[j]);
        out.push_back(d < cfg.t_low ? Evidence::Bright : (d > cfg.t_high ? Evidence::Dark : Evidence::Gap));
    }
    return out;
}

std::vector<StateInterval> segment_states(int ion_id, const std::vector<ticks_t>& times, const SegmenterConfig& cfg) {
    cfg.validate();
    if (!std::is_sorted(times.begin(), times.end())) throw DomainError("segment_states: times not sorted");
    return Segmenter(ion_id, times, cfg).run();
}

std::vector<StateInterval> intervals_from_trajectory(const sim::Trajectory& trajectory) {
    std::vector<StateInterval> out;
    out.reserve(trajectory.size());
    for (const auto& s : trajectory)
        out.push_back({s.ion_id, s.t_start, s.t_end, s.state == sim::IonState::Bright ? Label::Bright : Label::Dark});
    return out;
}

Label label_over(const std::vector<StateInterval>& intervals, double t0, double t1) {
    auto it = std::upper_bound(intervals.begin(), intervals.end(), t0,
                               [](double v, const StateInterval& s) { return v < s.t_start; });
    if (it == intervals.begin()) return Label::Excluded;
    --it;
    if (it->t_start <= t0 && t1 <= it->t_end) return it->label;
    return Label::Excluded;
}

std::vector<CountWindow> slice_windows(const std::vector<std::vector<StateInterval>>& intervals,
                                       const std::vector<std::vector<ticks_t>>& times, double t_int,
                                       const std::vector<std::vector<StateInterval>>& neighbor_labels,
                                       bool require_neighbors_bright) {
    if (!(t_int > 0.0) || !std::isfinite(t_int)) throw DomainError("slice_windows: t_int must be > 0");
    if (times.size() != intervals.size() || neighbor_labels.size() != intervals.size())
        throw DomainError("slice_windows: per-ion inputs differ in size");
    const std::size_t n_ions = intervals.size();
    std::vector<CountWindow> out;
    for (std::size_t ion = 0; ion < n_ions; ++ion) {
        std::vector<double> ts;
        ts.reserve(times[ion].size());
        for (auto v : times[ion]) ts.push_back(ticks_to_seconds(v));
        for (const auto& iv : intervals[ion]) {
            if (iv.label == Label::Excluded) continue;
            const auto k = static_cast<long>(std::floor(iv.length() / t_int + 1e-9));
            if (k < 2) continue;
            for (long w = 0; w < k; ++w) {
                const double t0 = iv.t_start + static_cast<double>(w) * t_int;
                const double t1 = t0 + t_int;
                std::uint8_t mask = 0;
                if (ion > 0 && label_over(neighbor_labels[ion - 1], t0, t1) == Label::Bright)
                    mask |= kLeftNeighborBright;
                if (ion + 1 < n_ions && label_over(neighbor_labels[ion + 1], t0, t1) == Label::Bright)
                    mask |= kRightNeighborBright;
                if (require_neighbors_bright) {
                    std::uint8_t need = 0;
                    if (ion > 0) need |= kLeftNeighborBright;
                    if (ion + 1 < n_ions) need |= kRightNeighborBright;
                    if ((mask & need) != need) continue;
                }
                const auto lo = std::upper_bound(ts.begin(), ts.end(), t0);
                const auto hi = std::upper_bound(lo, ts.end(), t1);
                out.push_back({static_cast<int>(ion), t0, t_int, static_cast<std::int64_t>(hi - lo), iv.label, mask});
            }
        }
    }
    return out;
}

LabelScore score_labels(const std::vector<StateInterval>& intervals, const sim::Trajectory& truth) {
    LabelScore s;
    std::size_t k = 0;
    for (const auto& iv : intervals) {
        if (iv.label == Label::Excluded) continue;
        s.labeled_time += iv.length();
        while (k > 0 && truth[k].t_start > iv.t_start) --k;
        while (k < truth.size() && truth[k].t_end <= iv.t_start) ++k;
        for (std::size_t q = k; q < truth.size() && truth[q].t_start < iv.t_end; ++q) {
            const double a = std::max(iv.t_start, truth[q].t_start);
            const double b = std::min(iv.t_end, truth[q].t_end);
            const Label tl = truth[q].state == sim::IonState::Bright ? Label::Bright : Label::Dark;
            if (b > a && tl == iv.label) s.correct_time += b - a;
        }
    }
    return s;
}

bool window_straddles(const CountWindow& w, const sim::Trajectory& truth) {
    const double t1 = w.t0 + w.t_int;
    auto it = std::upper_bound(truth.begin(), truth.end(), w.t0,
                               [](double v, const sim::StateSegment& s) { return v < s.t_start; });
    // First segment starting after t0: its start is a transition.
    return it != truth.end() && it->t_start < t1;
}

} // namespace ionreadout::segmenter
