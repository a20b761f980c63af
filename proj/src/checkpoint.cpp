#include "intlora/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace intlora {

namespace {

constexpr char kMagic[4] = {'I', 'L', 'R', 'A'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kNoAux = 255;

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        le(bits, 8);
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& buf, std::string context)
        : buf_(buf), ctx_(std::move(context)) {}

    std::size_t offset() const { return off_; }
    void set_context(std::string ctx) { ctx_ = std::move(ctx); }

    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(le(4)); }
    double f64() {
        const std::uint64_t bits = le(8);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> out(buf_.begin() + off_, buf_.begin() + off_ + n);
        off_ += n;
        return out;
    }
    void expect_end() {
        if (off_ != buf_.size()) {
            throw EncodingError("checkpoint: trailing bytes at offset " + std::to_string(off_));
        }
    }

private:
    void need(std::size_t n) {
        if (off_ + n > buf_.size()) {
            throw EncodingError("checkpoint: truncated " + ctx_ + " at offset " +
                          std::to_string(off_));
        }
    }
    std::uint64_t le(int n) {
        need(n);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(buf_[off_ + i]) << (8 * i);
        }
        off_ += n;
        return v;
    }
    const std::vector<std::uint8_t>& buf_;
    std::string ctx_;
    std::size_t off_ = 0;
};

void write_record(Writer& w, const CheckpointRecord& r) {
    const std::size_t count = static_cast<std::size_t>(r.rows) * r.cols;
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    w.u8(static_cast<std::uint8_t>(r.role));
    w.u32(r.rows);
    w.u32(r.cols);
    w.u8(r.bits);
    w.u8(r.headroom);
    if (r.scales.size() != r.rows || r.zero_points.size() != r.rows ||
        r.row_flags.size() != r.rows) {
        throw EncodingError("checkpoint: per-row metadata of '" + r.name +
                      "' does not match row count");
    }
    for (double s : r.scales) w.f64(s);
    for (std::int32_t z : r.zero_points) w.i32(z);
    w.bytes(r.row_flags.data(), r.row_flags.size());
    if (r.bits == 64) {
        if (r.reals.size() != count) {
            throw EncodingError("checkpoint: real payload of '" + r.name + "' has wrong length");
        }
        for (double v : r.reals) w.f64(v);
    } else {
        if (r.ints.size() != count) {
            throw EncodingError("checkpoint: integer payload of '" + r.name + "' has wrong length");
        }
        const std::vector<std::uint8_t> packed = pack_payload(r.ints, r.bits);
        w.bytes(packed.data(), packed.size());
        if (r.role == RecordRole::MergedShift) {
            std::vector<std::uint8_t> bitmap((count + 7) / 8, 0);
            for (std::size_t i = 0; i < count; ++i) {
                if (r.signs[i] < 0) bitmap[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
            }
            w.bytes(bitmap.data(), bitmap.size());
        }
    }
    if (r.has_aux) {
        w.u8(static_cast<std::uint8_t>(r.aux.distribution));
        w.u64(r.aux.seed);
        w.f64(r.aux.dof);
        w.f64(r.aux.alpha);
        w.u8(static_cast<std::uint8_t>(r.aux.variance_mode));
    } else {
        w.u8(kNoAux);
    }
    w.u32(static_cast<std::uint32_t>(r.aux_ratio.size()));
    for (double v : r.aux_ratio) w.f64(v);
}

CheckpointRecord read_record(Reader& rd) {
    CheckpointRecord r;
    const std::uint32_t name_len = rd.u32();
    const std::vector<std::uint8_t> name = rd.bytes(name_len);
    r.name.assign(name.begin(), name.end());
    rd.set_context("record '" + r.name + "'");
    const std::uint8_t role = rd.u8();
    if (role > static_cast<std::uint8_t>(RecordRole::MergedShift)) {
        throw EncodingError("checkpoint: unknown role in record '" + r.name + "' at offset " +
                      std::to_string(rd.offset() - 1));
    }
    r.role = static_cast<RecordRole>(role);
    r.rows = rd.u32();
    r.cols = rd.u32();
    r.bits = rd.u8();
    r.headroom = rd.u8();
    if (r.bits != 64 && (r.bits < 2 || r.bits > 8)) {
        throw EncodingError("checkpoint: unsupported bit-width in record '" + r.name + "'");
    }
    const std::size_t count = static_cast<std::size_t>(r.rows) * r.cols;
    r.scales.resize(r.rows);
    for (auto& s : r.scales) s = rd.f64();
    r.zero_points.resize(r.rows);
    for (auto& z : r.zero_points) z = rd.i32();
    r.row_flags = rd.bytes(r.rows);
    if (r.bits == 64) {
        r.reals.resize(count);
        for (auto& v : r.reals) v = rd.f64();
    } else {
        const std::vector<std::uint8_t> packed = rd.bytes(packed_size(count, r.bits));
        r.ints = unpack_payload(packed, count, r.bits);
        const std::int32_t qmax = (1 << r.bits) - 1;
        for (std::int32_t v : r.ints) {
            if (v < 0 || v > qmax) {
                throw EncodingError("checkpoint: payload value out of range in record '" +
                              r.name + "'");
            }
        }
        if (r.role == RecordRole::MergedShift) {
            const std::vector<std::uint8_t> bitmap = rd.bytes((count + 7) / 8);
            r.signs.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                r.signs[i] = (bitmap[i / 8] >> (i % 8)) & 1 ? -1 : 1;
            }
        }
    }
    const std::uint8_t dist = rd.u8();
    if (dist != kNoAux) {
        if (dist > static_cast<std::uint8_t>(Distribution::StudentT)) {
            throw EncodingError("checkpoint: unknown distribution tag in record '" + r.name + "'");
        }
        r.has_aux = true;
        r.aux.distribution = static_cast<Distribution>(dist);
        r.aux.seed = rd.u64();
        r.aux.dof = rd.f64();
        r.aux.alpha = rd.f64();
        const std::uint8_t vm = rd.u8();
        if (vm > 1) {
            throw EncodingError("checkpoint: unknown variance mode in record '" + r.name + "'");
        }
        r.aux.variance_mode = static_cast<VarianceMode>(vm);
    }
    const std::uint32_t ratio_len = rd.u32();
    r.aux_ratio.resize(ratio_len);
    for (auto& v : r.aux_ratio) v = rd.f64();
    return r;
}

} // namespace

bool CheckpointRecord::operator==(const CheckpointRecord& o) const {
    return name == o.name && role == o.role && rows == o.rows && cols == o.cols &&
           bits == o.bits && headroom == o.headroom && scales == o.scales &&
           zero_points == o.zero_points && row_flags == o.row_flags &&
           ints == o.ints && signs == o.signs && reals == o.reals &&
           has_aux == o.has_aux && aux_ratio == o.aux_ratio &&
           (!has_aux || (aux.distribution == o.aux.distribution &&
                         aux.seed == o.aux.seed && aux.dof == o.aux.dof &&
                         aux.alpha == o.aux.alpha &&
                         aux.variance_mode == o.aux.variance_mode));
}

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointRecord>& records) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    w.u32(static_cast<std::uint32_t>(records.size()));
    for (const CheckpointRecord& r : records) write_record(w, r);

    // Atomic publication: write a sibling temp file, then rename.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open '" + tmp + "' for writing");
        os.write(reinterpret_cast<const char*>(w.data().data()),
                 static_cast<std::streamsize>(w.data().size()));
        if (!os) throw IoError("write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename to '" + path + "' failed: " + ec.message());
}

std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
    Reader rd(buf, "header");
    const std::vector<std::uint8_t> magic = rd.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw EncodingError("checkpoint: bad magic at offset 0");
    }
    const std::uint16_t version = rd.u16();
    if (version != kVersion) {
        throw EncodingError("checkpoint: unsupported version " + std::to_string(version) +
                      " at offset 4");
    }
    const std::uint32_t count = rd.u32();
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        rd.set_context("record " + std::to_string(i));
        records.push_back(read_record(rd));
    }
    rd.expect_end();
    return records;
}

CheckpointRecord base_record(const std::string& name, const QuantizedBase& qb) {
    CheckpointRecord r;
    r.name = name;
    r.role = RecordRole::Base;
    r.rows = static_cast<std::uint32_t>(qb.rows());
    r.cols = static_cast<std::uint32_t>(qb.cols());
    r.bits = static_cast<std::uint8_t>(qb.base.bits);
    r.scales = qb.base.scale;
    r.zero_points = qb.base.zero_point;
    r.row_flags.resize(qb.rows());
    for (std::size_t i = 0; i < qb.rows(); ++i) {
        r.row_flags[i] = static_cast<std::uint8_t>(
            (qb.base.degenerate[i] ? 1 : 0) | (qb.vmc_degenerate[i] ? 2 : 0));
    }
    r.ints = qb.base.ints;
    r.has_aux = true;
    r.aux = qb.aux;
    r.aux_ratio = qb.aux_ratio;
    return r;
}

QuantizedBase base_from_record(const CheckpointRecord& rec) {
    if (rec.role != RecordRole::Base || !rec.has_aux ||
        rec.aux_ratio.size() != rec.rows) {
        throw EncodingError("record '" + rec.name + "' is not a valid base record");
    }
    QuantizedBase qb;
    qb.base.ints = rec.ints;
    qb.base.scale = rec.scales;
    qb.base.zero_point = rec.zero_points;
    qb.base.bits = rec.bits;
    qb.base.rows = rec.rows;
    qb.base.cols = rec.cols;
    qb.base.degenerate.resize(rec.rows);
    qb.vmc_degenerate.resize(rec.rows);
    for (std::size_t i = 0; i < rec.rows; ++i) {
        qb.base.degenerate[i] = rec.row_flags[i] & 1;
        qb.vmc_degenerate[i] = (rec.row_flags[i] >> 1) & 1;
    }
    qb.aux = rec.aux;
    qb.aux_ratio = rec.aux_ratio;
    return qb;
}

std::vector<CheckpointRecord> adapter_records(const std::string& name,
                                              const LowRankPair& lr) {
    auto make = [&](RecordRole role, const Matrix& m, const std::string& suffix) {
        CheckpointRecord r;
        r.name = name + suffix;
        r.role = role;
        r.rows = static_cast<std::uint32_t>(m.rows());
        r.cols = static_cast<std::uint32_t>(m.cols());
        r.bits = 64;
        r.scales.assign(m.rows(), 1.0);
        r.scales[0] = lr.lora_scale;
        r.zero_points.assign(m.rows(), 0);
        r.row_flags.assign(m.rows(), 0);
        r.reals = m.values();
        return r;
    };
    return {make(RecordRole::AdapterA, lr.a, ".A"),
            make(RecordRole::AdapterB, lr.b, ".B")};
}

LowRankPair adapter_from_records(const CheckpointRecord& rec_a,
                                 const CheckpointRecord& rec_b) {
    if (rec_a.role != RecordRole::AdapterA || rec_b.role != RecordRole::AdapterB ||
        rec_a.bits != 64 || rec_b.bits != 64 || rec_a.cols != rec_b.rows) {
        throw EncodingError("records do not form an adapter pair");
    }
    LowRankPair lr;
    lr.a = Matrix(rec_a.rows, rec_a.cols, rec_a.reals);
    lr.b = Matrix(rec_b.rows, rec_b.cols, rec_b.reals);
    lr.lora_scale = rec_a.scales[0];
    return lr;
}

std::vector<CheckpointRecord> merged_records(const std::string& name,
                                             const MergedWeights& m) {
    CheckpointRecord base;
    base.name = name + ".base";
    base.role = RecordRole::Base;
    base.rows = static_cast<std::uint32_t>(m.rows);
    base.cols = static_cast<std::uint32_t>(m.cols);
    base.bits = static_cast<std::uint8_t>(m.base_bits);
    base.scales.assign(m.rows, 1.0);
    base.zero_points = m.base_zero;
    base.row_flags.assign(m.rows, 0);
    base.ints = m.base_ints;
    base.has_aux = true;  // keeps the record self-describing; ratios unused here
    base.aux = AuxiliarySpec{};
    base.aux_ratio.assign(m.rows, 1.0);

    CheckpointRecord adapt;
    adapt.name = name + ".adapt";
    adapt.rows = base.rows;
    adapt.cols = base.cols;
    if (m.variant == MergeVariant::Mul) {
        adapt.role = RecordRole::MergedMul;
        adapt.bits = static_cast<std::uint8_t>(m.adapt.bits);
        adapt.scales = m.adapt.scale;
        adapt.zero_points = m.adapt.zero_point;
        adapt.row_flags.resize(m.rows);
        for (std::size_t i = 0; i < m.rows; ++i) adapt.row_flags[i] = m.adapt.degenerate[i];
        adapt.ints = m.adapt.ints;
    } else {
        adapt.role = RecordRole::MergedShift;
        adapt.bits = static_cast<std::uint8_t>(m.code.bits);
        adapt.headroom = static_cast<std::uint8_t>(m.headroom);
        adapt.scales.assign(m.rows, 1.0);
        adapt.zero_points.assign(m.rows, 0);
        adapt.row_flags.assign(m.rows, 0);
        adapt.ints = m.code.shift;
        adapt.signs = m.code.sign;
    }
    return {base, adapt};
}

MergedWeights merged_from_records(const CheckpointRecord& base,
                                  const CheckpointRecord& merged) {
    if (base.role != RecordRole::Base || base.rows != merged.rows ||
        base.cols != merged.cols) {
        throw EncodingError("records do not form a merged pair");
    }
    MergedWeights m;
    m.base_ints = base.ints;
    m.base_zero = base.zero_points;
    m.base_bits = base.bits;
    m.rows = base.rows;
    m.cols = base.cols;
    if (merged.role == RecordRole::MergedMul) {
        m.variant = MergeVariant::Mul;
        m.adapt.ints = merged.ints;
        m.adapt.scale = merged.scales;
        m.adapt.zero_point = merged.zero_points;
        m.adapt.bits = merged.bits;
        m.adapt.rows = merged.rows;
        m.adapt.cols = merged.cols;
        m.adapt.degenerate.assign(merged.row_flags.begin(), merged.row_flags.end());
    } else if (merged.role == RecordRole::MergedShift) {
        m.variant = MergeVariant::Shift;
        m.code.shift = merged.ints;
        m.code.sign = merged.signs;
        m.code.bits = merged.bits;
        m.code.rows = merged.rows;
        m.code.cols = merged.cols;
        m.headroom = merged.headroom;
    } else {
        throw EncodingError("record '" + merged.name + "' is not a merged record");
    }
    return m;
}

} // namespace intlora
