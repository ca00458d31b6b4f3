#include "volsr/vol_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "volsr/errors.hpp"

namespace volsr {

namespace {

static_assert(std::endian::native == std::endian::little,
              "VOL1 I/O assumes a little-endian host");

constexpr char kMagic[4] = {'V', 'O', 'L', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

void write_volume(const std::filesystem::path& path, const Volume& v) {
    v.validate();
    nlohmann::json header;
    header["dims"] = {v.nx, v.ny, v.nz};
    header["spacing"] = {v.sx, v.sy, v.sz};
    header["dtype"] = "f32";
    const std::string htext = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, static_cast<std::uint32_t>(htext.size()));
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    os.write(reinterpret_cast<const char*>(v.data.data()),
             static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    if (!os) throw IoError("failed writing volume payload: " + path.string());
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open volume file: " + path.string());

    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a VOL1 file (bad magic): " + path.string());

    std::uint32_t hlen = read_u32(is);
    if (!is || hlen == 0 || hlen > (1u << 20))
        throw FormatError("implausible VOL1 header length: " + path.string());
    std::string htext(hlen, '\0');
    is.read(htext.data(), hlen);
    if (!is) throw FormatError("truncated VOL1 header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("unparsable VOL1 header in " + path.string() + ": " + e.what());
    }

    Volume v;
    try {
        auto dims = header.at("dims");
        auto spacing = header.at("spacing");
        if (header.at("dtype").get<std::string>() != "f32")
            throw FormatError("unsupported dtype in " + path.string());
        v.nx = dims.at(0).get<int>();
        v.ny = dims.at(1).get<int>();
        v.nz = dims.at(2).get<int>();
        v.sx = spacing.at(0).get<double>();
        v.sy = spacing.at(1).get<double>();
        v.sz = spacing.at(2).get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid VOL1 header fields in " + path.string() + ": " + e.what());
    }
    if (v.nx <= 0 || v.ny <= 0 || v.nz <= 0)
        throw FormatError("non-positive dims in " + path.string());
    if (!(v.sx > 0.0) || !(v.sy > 0.0) || !(v.sz > 0.0))
        throw FormatError("non-positive spacing in " + path.string());

    const std::size_t n = static_cast<std::size_t>(v.nx) * v.ny * v.nz;
    v.data.resize(n);
    is.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(is.gcount()) != n * sizeof(float))
        throw CorruptionError("payload shorter than dims imply: " + path.string());
    // Trailing bytes mean the header lied about the payload size.
    if (is.peek() != std::ifstream::traits_type::eof())
        throw CorruptionError("payload longer than dims imply: " + path.string());

    for (float f : v.data)
        if (!std::isfinite(f))
            throw ValidationError("non-finite intensity in " + path.string());
    return v;
}

}  // namespace volsr
