#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "intlora/adapt.hpp"

namespace intlora {

enum class RecordRole : std::uint8_t {
    Base = 0,
    AdapterA = 1,
    AdapterB = 2,
    MergedMul = 3,
    MergedShift = 4,
};

// One tensor in an "ILRA" container. Integer payloads are nibble-packed for
// bits <= 4 and one byte per value for 5..8; bits == 64 marks a raw binary64
// payload (adapter factors). MergedShift payloads append a sign bitmap.
// Full byte layout in docs/checkpoint-format.md.
struct CheckpointRecord {
    std::string name;
    RecordRole role = RecordRole::Base;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::uint8_t bits = 8;
    std::uint8_t headroom = 0;  // MergedShift: N
    std::vector<double> scales;             // per row; adapters: scales[0] = lora scale
    std::vector<std::int32_t> zero_points;  // per row
    std::vector<std::uint8_t> row_flags;    // bit0 quantizer-degenerate, bit1 vmc fallback
    std::vector<std::int32_t> ints;         // integer payload (bits <= 8)
    std::vector<std::int8_t> signs;         // MergedShift only, entries in {-1,+1}
    std::vector<double> reals;              // bits == 64 payload
    bool has_aux = false;
    AuxiliarySpec aux;
    std::vector<double> aux_ratio;

    bool operator==(const CheckpointRecord&) const;
};

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::string& path);

// Conversions between in-memory values and records.
CheckpointRecord base_record(const std::string& name, const QuantizedBase& qb);
QuantizedBase base_from_record(const CheckpointRecord& rec);

std::vector<CheckpointRecord> adapter_records(const std::string& name,
                                              const LowRankPair& lr);
LowRankPair adapter_from_records(const CheckpointRecord& rec_a,
                                 const CheckpointRecord& rec_b);

// The merged container is a (base, merged) record pair sharing a name prefix.
std::vector<CheckpointRecord> merged_records(const std::string& name,
                                             const MergedWeights& m);
MergedWeights merged_from_records(const CheckpointRecord& base,
                                  const CheckpointRecord& merged);

} // namespace intlora
