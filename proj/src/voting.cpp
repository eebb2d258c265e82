#include "bv/voting.hpp"

#include <algorithm>
#include <cmath>

#include "bv/errors.hpp"

namespace bv {

namespace {

// area-descending, view id ascending on ties
void rank(std::vector<const ProjectionRecord*>& recs) {
    std::sort(recs.begin(), recs.end(), [](const ProjectionRecord* a, const ProjectionRecord* b) {
        if (a->visible_area_px2 != b->visible_area_px2)
            return a->visible_area_px2 > b->visible_area_px2;
        return a->view_id < b->view_id;
    });
}

std::vector<CandidateRef> take_top(const std::vector<const ProjectionRecord*>& ranked,
                                   int denominator) {
    size_t n = ranked.size();
    size_t take = std::max<size_t>(1, (n + size_t(denominator) - 1) / size_t(denominator));
    std::vector<CandidateRef> out;
    for (size_t i = 0; i < take && i < n; ++i)
        out.push_back({ranked[i]->face_id, ranked[i]->view_id});
    return out;
}

}  // namespace

std::vector<CandidateRef> select_roof_candidates(const std::vector<ProjectionRecord>& roofs) {
    std::vector<const ProjectionRecord*> usable;
    for (const ProjectionRecord& r : roofs)
        if (r.kind == FaceKind::Roof && r.usable) usable.push_back(&r);
    if (usable.empty()) throw NoVisibleViews("no visible roof views");
    rank(usable);
    return take_top(usable, 4);
}

std::vector<CandidateRef> select_facade_candidates(const std::vector<ProjectionRecord>& facades) {
    // group records per facade face
    std::map<std::string, std::vector<const ProjectionRecord*>> per_face;
    std::map<std::string, Vec2> normals;
    for (const ProjectionRecord& r : facades) {
        if (r.kind != FaceKind::Facade || !r.usable) continue;
        per_face[r.face_id].push_back(&r);
        normals[r.face_id] = r.outward;
    }
    if (per_face.empty()) throw NoVisibleViews("no visible facade views");

    auto total_area = [&](const std::string& id) {
        double s = 0;
        for (const ProjectionRecord* r : per_face[id]) s += r->visible_area_px2;
        return s;
    };

    // opposing pairs by antiparallel outward normals; keep the larger side
    std::vector<std::string> ids;
    for (auto& [id, recs] : per_face) ids.push_back(id);
    std::vector<bool> dropped(ids.size(), false);
    std::vector<bool> paired(ids.size(), false);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (paired[i]) continue;
        for (size_t j = i + 1; j < ids.size(); ++j) {
            if (paired[j]) continue;
            if (normals[ids[i]].dot(normals[ids[j]]) < -0.9) {
                paired[i] = paired[j] = true;
                double ai = total_area(ids[i]), aj = total_area(ids[j]);
                // ties keep the lexicographically smaller face id
                if (ai > aj || (ai == aj && ids[i] < ids[j]))
                    dropped[j] = true;
                else
                    dropped[i] = true;
                break;
            }
        }
    }

    std::vector<CandidateRef> out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (dropped[i]) continue;
        std::vector<const ProjectionRecord*> recs = per_face[ids[i]];
        rank(recs);
        for (CandidateRef& r : take_top(recs, 3)) out.push_back(r);
    }
    return out;
}

CandidateSet select_candidates(const std::string& building_id,
                               const std::vector<ProjectionRecord>& records) {
    CandidateSet cs;
    cs.building_id = building_id;
    try {
        cs.roof = select_roof_candidates(records);
    } catch (const NoVisibleViews&) {
    }
    try {
        cs.facade = select_facade_candidates(records);
    } catch (const NoVisibleViews&) {
    }
    return cs;
}

std::string decision_name(Decision d) {
    switch (d) {
        case Decision::Unchanged: return "unchanged";
        case Decision::Changed: return "changed";
        case Decision::InsufficientEvidence: return "insufficient-evidence";
    }
    return "?";
}

namespace {

BuildingVerdict vote_sets(const std::string& building_id,
                          const std::vector<const std::vector<CandidateRef>*>& sets,
                          const std::map<CandidateRef, PatchVerdict>& verdicts) {
    BuildingVerdict bv;
    bv.building_id = building_id;
    bool any_empty = false;
    bool any_incorrect = false;
    for (const auto* set : sets) {
        if (set->empty()) any_empty = true;
        for (const CandidateRef& ref : *set) {
            auto it = verdicts.find(ref);
            if (it == verdicts.end())
                throw MissingVerdict("no classification for candidate " + ref.face_id + " in " +
                                     ref.view_id);
            bv.patches.push_back(it->second);
            if (!it->second.correct) any_incorrect = true;
        }
    }
    if (any_incorrect)
        bv.decision = Decision::Changed;
    else if (any_empty)
        bv.decision = Decision::InsufficientEvidence;
    else
        bv.decision = Decision::Unchanged;
    return bv;
}

}  // namespace

BuildingVerdict vote(const CandidateSet& candidates,
                     const std::map<CandidateRef, PatchVerdict>& verdicts) {
    return vote_sets(candidates.building_id, {&candidates.roof, &candidates.facade}, verdicts);
}

BuildingVerdict vote_single_view_mode(VoteMode mode, const CandidateSet& candidates,
                                      const std::map<CandidateRef, PatchVerdict>& verdicts) {
    switch (mode) {
        case VoteMode::Nadir:
            return vote_sets(candidates.building_id, {&candidates.roof}, verdicts);
        case VoteMode::Oblique:
            return vote_sets(candidates.building_id, {&candidates.facade}, verdicts);
        case VoteMode::ThreeD: return vote(candidates, verdicts);
    }
    throw ValidationError("unknown vote mode");
}

Metrics compute_metrics(const ConfusionCounts& c) {
    if (c.tp + c.fn <= 0) throw UndefinedRatio("C_P undefined: no positive samples");
    if (c.tn + c.fp <= 0) throw UndefinedRatio("C_N undefined: no negative samples");
    Metrics m;
    m.cp_percent = std::round(1000.0 * double(c.tp) / double(c.tp + c.fn)) / 10.0;
    m.cn_percent = std::round(1000.0 * double(c.tn) / double(c.tn + c.fp)) / 10.0;
    return m;
}

}  // namespace bv
