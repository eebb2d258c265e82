#ifndef BV_VOTING_HPP
#define BV_VOTING_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bv/geometry.hpp"
#include "bv/lod1.hpp"

namespace bv {

// One (face, view) projection record as persisted by the extraction stage.
// visible_area_px2 is the projected area scaled by the non-occluded fraction,
// so ranking is occlusion-aware.
struct ProjectionRecord {
    std::string building_id, face_id, view_id;
    FaceKind kind = FaceKind::Roof;
    Vec2 outward;  // facade outward 2D normal
    double projected_area_px2 = 0;
    double visible_area_px2 = 0;
    bool usable = false;  // has a visible bbox large enough to classify
};

struct CandidateRef {
    std::string face_id, view_id;

    bool operator<(const CandidateRef& o) const {
        return face_id != o.face_id ? face_id < o.face_id : view_id < o.view_id;
    }
    bool operator==(const CandidateRef& o) const {
        return face_id == o.face_id && view_id == o.view_id;
    }
};

struct CandidateSet {
    std::string building_id;
    std::vector<CandidateRef> roof;
    std::vector<CandidateRef> facade;
};

// Top ceil(n/4) roof views by visible projected area (minimum 1), ties broken
// by view id. Throws NoVisibleViews when no usable roof projection exists.
std::vector<CandidateRef> select_roof_candidates(const std::vector<ProjectionRecord>& roofs);

// Facades are grouped into opposing pairs (outward normals with dot < -0.9);
// each pair keeps the side with the larger total non-occluded area, unpaired
// facades stay. Per kept facade the top ceil(n/3) views are selected.
std::vector<CandidateRef> select_facade_candidates(const std::vector<ProjectionRecord>& facades);

// Builds both sets; an empty set stays empty instead of throwing (the vote
// maps it to insufficient-evidence).
CandidateSet select_candidates(const std::string& building_id,
                               const std::vector<ProjectionRecord>& records);

enum class Decision { Unchanged, Changed, InsufficientEvidence };

std::string decision_name(Decision d);

struct PatchVerdict {
    CandidateRef ref;
    int predicted = -1;   // class index: 0 roof, 1 facade, 2 background
    int expected = -1;
    bool correct = false;
    double confidence = 0;  // probability assigned to the predicted class
};

struct BuildingVerdict {
    std::string building_id;
    Decision decision = Decision::InsufficientEvidence;
    std::vector<PatchVerdict> patches;
};

enum class VoteMode { Nadir, Oblique, ThreeD };

// All-correct rule: changed if any candidate patch is misclassified;
// insufficient-evidence if a required candidate set is empty; otherwise
// unchanged. Throws MissingVerdict when a candidate has no verdict.
BuildingVerdict vote(const CandidateSet& candidates,
                     const std::map<CandidateRef, PatchVerdict>& verdicts);

// Single-set restriction of the same rule: nadir uses only roof candidates,
// oblique only facade candidates.
BuildingVerdict vote_single_view_mode(VoteMode mode, const CandidateSet& candidates,
                                      const std::map<CandidateRef, PatchVerdict>& verdicts);

struct ConfusionCounts {
    long tp = 0, fn = 0, fp = 0, tn = 0;
};

struct Metrics {
    double cp_percent = 0;  // TP / (TP + FN), demolished correctly flagged
    double cn_percent = 0;  // TN / (TN + FP), unchanged correctly kept
};

// Percentages rounded to one decimal. Throws UndefinedRatio when a
// denominator is zero.
Metrics compute_metrics(const ConfusionCounts& c);

}  // namespace bv

#endif
