#include "hipass/container.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace hipass {

namespace {

constexpr char kMagic[5] = {'V', 'T', 'E', 'N', '1'};

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError(std::string("truncated container: ") + what);
    return v;
}

}  // namespace

void write_container(std::ostream& os, const std::vector<NamedTensor>& records) {
    os.write(kMagic, sizeof kMagic);
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        put_u32(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        os.put(static_cast<char>(r.dtype));
        put_u32(os, static_cast<std::uint32_t>(r.tensor.rank()));
        for (auto e : r.tensor.shape()) put_u32(os, static_cast<std::uint32_t>(e));
        if (r.dtype == DType::f64) {
            os.write(reinterpret_cast<const char*>(r.tensor.data().data()),
                     static_cast<std::streamsize>(r.tensor.size() * sizeof(double)));
        } else {
            std::vector<float> buf(r.tensor.data().begin(), r.tensor.data().end());
            os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        }
    }
    if (!os) throw FormatError("failed writing container");
}

std::vector<NamedTensor> read_container(std::istream& is) {
    char magic[5] = {};
    if (!is.read(magic, 5)) throw FormatError("truncated container: magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic bytes, not a VTEN container");
    if (magic[4] != kMagic[4])
        throw FormatError(std::string("unsupported container version '") + magic[4] + "'");

    const std::uint32_t count = get_u32(is, "record count");
    std::vector<NamedTensor> records;
    records.reserve(std::min<std::uint32_t>(count, 1u << 16));
    for (std::uint32_t n = 0; n < count; ++n) {
        NamedTensor r;
        const std::uint32_t name_len = get_u32(is, "name length");
        if (name_len > (1u << 20)) throw FormatError("implausible record name length");
        r.name.resize(name_len);
        if (!is.read(r.name.data(), name_len)) throw FormatError("truncated container: name");
        const int code = is.get();
        if (code == std::char_traits<char>::eof()) throw FormatError("truncated container: dtype");
        if (code != 0 && code != 1) throw FormatError("unknown dtype code " + std::to_string(code), r.name);
        r.dtype = static_cast<DType>(code);
        const std::uint32_t rank = get_u32(is, "rank");
        if (rank == 0 || rank > 16) throw FormatError("invalid rank " + std::to_string(rank), r.name);
        Shape shape(rank);
        std::size_t total = 1;
        for (auto& e : shape) {
            e = get_u32(is, "extent");
            if (e == 0) throw FormatError("zero extent", r.name);
            total *= e;
            if (total > (std::size_t{1} << 34)) throw FormatError("implausible tensor size", r.name);
        }
        std::vector<double> values(total);
        if (r.dtype == DType::f64) {
            if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(total * sizeof(double))))
                throw FormatError("truncated container: data", r.name);
        } else {
            std::vector<float> buf(total);
            if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(total * sizeof(float))))
                throw FormatError("truncated container: data", r.name);
            std::copy(buf.begin(), buf.end(), values.begin());
        }
        r.tensor = Tensor(std::move(shape), std::move(values));
        records.push_back(std::move(r));
    }
    return records;
}

void write_container(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path.string() + "' for writing", "path");
    write_container(os, records);
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path.string() + "'", "path");
    return read_container(is);
}

const NamedTensor* find_record_or_null(const std::vector<NamedTensor>& records, const std::string& name) {
    auto it = std::find_if(records.begin(), records.end(), [&](const NamedTensor& r) { return r.name == name; });
    return it == records.end() ? nullptr : &*it;
}

const Tensor& find_record(const std::vector<NamedTensor>& records, const std::string& name) {
    if (const auto* r = find_record_or_null(records, name)) return r->tensor;
    throw FormatError("missing record '" + name + "'", name);
}

void write_pnm(const std::filesystem::path& path, const Tensor& frame) {
    require_rank(frame, 3, "frame");
    const std::size_t c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
    if (c != 1 && c != 3) throw DimensionError("PNM export needs 1 or 3 channels", "frame");
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open '" + path.string() + "' for writing", "path");
    os << (c == 1 ? "P2" : "P3") << '\n' << w << ' ' << h << "\n255\n";
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = std::clamp(frame.at(ch, y, x), 0.0, 1.0);
                os << static_cast<int>(std::lround(v * 255.0)) << ((x + 1 == w && ch + 1 == c) ? "" : " ");
            }
        os << '\n';
    }
}

Tensor read_pnm(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open '" + path.string() + "'", "path");
    // Strip comments first; they may appear anywhere in the header.
    std::stringstream clean;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        clean << (hash == std::string::npos ? line : line.substr(0, hash)) << '\n';
    }
    std::string magic;
    long w = 0, h = 0, maxval = 0;
    clean >> magic >> w >> h >> maxval;
    if (magic != "P2" && magic != "P3") throw FormatError("unsupported PNM type '" + magic + "' (need P2 or P3)", "path");
    if (!clean || w <= 0 || h <= 0 || maxval <= 0) throw FormatError("malformed PNM header", "path");
    const std::size_t c = magic == "P2" ? 1 : 3;
    Tensor frame({c, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (std::size_t y = 0; y < frame.dim(1); ++y)
        for (std::size_t x = 0; x < frame.dim(2); ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                long v = 0;
                if (!(clean >> v)) throw FormatError("truncated PNM pixel data", "path");
                if (v < 0 || v > maxval) throw FormatError("PNM sample out of range", "path");
                frame.at(ch, y, x) = static_cast<double>(v) / static_cast<double>(maxval);
            }
    return frame;
}

}  // namespace hipass
