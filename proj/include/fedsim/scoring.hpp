#pragma once

#include <array>

#include "fedsim/eval.hpp"
#include "fedsim/net.hpp"
#include "fedsim/report.hpp"
#include "fedsim/synth.hpp"

namespace fedsim {

inline Backbone make_backbone(const BackboneConfig& cfg, const ParamSet& params) {
    Backbone b(cfg, 0);
    b.set_params(params);
    return b;
}

// Rank-1/5/10 and mAP of a model on one client's query/gallery split.
inline EvalMetrics evaluate_split(const Backbone& model, const ClientDataset& data) {
    RetrievalSet query{extract_features(model, data.query), data.query_identities,
                       data.query_cameras};
    RetrievalSet gallery{extract_features(model, data.gallery), data.gallery_identities,
                         data.gallery_cameras};
    static constexpr std::array<int, 3> ks{1, 5, 10};
    const auto ranks = cmc(query, gallery, ks);
    EvalMetrics m;
    m.rank1 = ranks[0];
    m.rank5 = ranks[1];
    m.rank10 = ranks[2];
    m.map = map_score(query, gallery);
    return m;
}

} // namespace fedsim
