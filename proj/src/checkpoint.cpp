#include "omd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace omd {

namespace {

constexpr char kMagic[8] = {'O', 'M', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_le(std::ofstream& out, T v) {
    // Host is little-endian on every supported target.
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, std::span<const double>>>& sections) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    write_le<uint32_t>(out, static_cast<uint32_t>(sections.size()));
    uint64_t offset = 0;
    for (const auto& [name, data] : sections) {
        write_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<uint64_t>(out, offset);
        write_le<uint64_t>(out, static_cast<uint64_t>(data.size()));
        offset += data.size();
    }
    for (const auto& [name, data] : sections) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::map<std::string, std::vector<double>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    }
    const uint32_t count = read_le<uint32_t>(in);
    std::vector<std::pair<std::string, std::pair<uint64_t, uint64_t>>> table;
    table.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t len = read_le<uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        const uint64_t offset = read_le<uint64_t>(in);
        const uint64_t n = read_le<uint64_t>(in);
        table.emplace_back(std::move(name), std::make_pair(offset, n));
    }
    const std::streampos payload_start = in.tellg();
    std::map<std::string, std::vector<double>> result;
    for (const auto& [name, range] : table) {
        std::vector<double> data(range.second);
        in.seekg(payload_start + static_cast<std::streamoff>(range.first * sizeof(double)));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(range.second * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated section '" + name + "'");
        result.emplace(name, std::move(data));
    }
    return result;
}

}  // namespace omd
