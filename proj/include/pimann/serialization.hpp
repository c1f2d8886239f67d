#pragma once

// JSON adapters for configuration structs shared by the CLI and the
// artifact files.

#include <json.hpp>

#include "pimann/ivfpq.hpp"

namespace pimann {

inline void to_json(nlohmann::json& j, const BitWidths& b) {
    j = {{"B_c", b.centroid}, {"B_q", b.query}, {"B_p", b.point},
         {"B_cb", b.codebook}, {"B_l", b.lut}, {"B_a", b.address}};
}

inline void from_json(const nlohmann::json& j, BitWidths& b) {
    BitWidths d;
    b.centroid = j.value("B_c", d.centroid);
    b.query = j.value("B_q", d.query);
    b.point = j.value("B_p", d.point);
    b.codebook = j.value("B_cb", d.codebook);
    b.lut = j.value("B_l", d.lut);
    b.address = j.value("B_a", d.address);
}

inline void to_json(nlohmann::json& j, const IndexConfig& c) {
    j = {{"nlist", c.nlist},
         {"M", c.M},
         {"CB", c.CB},
         {"P", c.P},
         {"K", c.K},
         {"bits", c.bits},
         {"kmeans_iters", c.kmeans_iters},
         {"coarse_train_size", c.coarse_train_size},
         {"pq_train_size", c.pq_train_size}};
}

inline void from_json(const nlohmann::json& j, IndexConfig& c) {
    IndexConfig d;
    c.nlist = j.value("nlist", d.nlist);
    c.M = j.value("M", d.M);
    c.CB = j.value("CB", d.CB);
    c.P = j.value("P", d.P);
    c.K = j.value("K", d.K);
    c.bits = j.contains("bits") ? j.at("bits").get<BitWidths>() : d.bits;
    if (!j.contains("bits") || !j.at("bits").contains("B_a")) {
        c.bits.address = address_bits_for(c.CB);
    }
    c.kmeans_iters = j.value("kmeans_iters", d.kmeans_iters);
    c.coarse_train_size = j.value("coarse_train_size", d.coarse_train_size);
    c.pq_train_size = j.value("pq_train_size", d.pq_train_size);
}

} // namespace pimann
