#include "jbsde/cache.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "jbsde/errors.hpp"

namespace jbsde {
namespace {

static_assert(std::endian::native == std::endian::little,
              "the cache formats are little-endian on disk and this build writes raw bytes");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "the cache formats store IEEE-754 binary64");

class ByteWriter {
  public:
    template <class T>
    void put(const T& v) {
        const auto* b = reinterpret_cast<const unsigned char*>(&v);
        buf_.insert(buf_.end(), b, b + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        buf_.insert(buf_.end(), b, b + n);
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    void flush(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        if (!out) throw std::runtime_error("write to '" + path + "' failed");
    }

  private:
    std::vector<unsigned char> buf_;
};

class ByteReader {
  public:
    ByteReader(std::vector<unsigned char> bytes, std::string path)
        : buf_(std::move(bytes)), path_(std::move(path)) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + off_, sizeof(T));
        off_ += sizeof(T);
        return v;
    }
    void get_doubles(std::vector<double>& out, std::size_t count) {
        need(count * 8);
        out.resize(count);
        std::memcpy(out.data(), buf_.data() + off_, count * 8);
        off_ += count * 8;
    }
    void get_u32s(std::vector<std::uint32_t>& out, std::size_t count) {
        need(count * 4);
        out.resize(count);
        std::memcpy(out.data(), buf_.data() + off_, count * 4);
        off_ += count * 4;
    }
    std::string get_string() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s(reinterpret_cast<const char*>(buf_.data() + off_), len);
        off_ += len;
        return s;
    }
    std::size_t offset() const { return off_; }
    std::size_t size() const { return buf_.size(); }

    // The remaining payload must be exactly `count` more bytes.
    void expect_exact(std::size_t count) const {
        const std::size_t expected = off_ + count;
        if (buf_.size() != expected)
            throw CorruptionError("'" + path_ + "' has the wrong length: expected " +
                                  std::to_string(expected) + " bytes, actual " +
                                  std::to_string(buf_.size()));
    }

  private:
    void need(std::size_t k) {
        if (off_ + k > buf_.size())
            throw CorruptionError("'" + path_ + "' is truncated: expected at least " +
                                  std::to_string(off_ + k) + " bytes, actual " +
                                  std::to_string(buf_.size()));
    }

    std::vector<unsigned char> buf_;
    std::string path_;
    std::size_t off_ = 0;
};

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    const auto end = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(end));
    in.read(reinterpret_cast<char*>(bytes.data()), end);
    if (!in) throw std::runtime_error("read from '" + path + "' failed");
    return bytes;
}

void check_magic(ByteReader& r, const char expected[4], const std::string& path) {
    char magic[4];
    magic[0] = static_cast<char>(r.get<unsigned char>());
    magic[1] = static_cast<char>(r.get<unsigned char>());
    magic[2] = static_cast<char>(r.get<unsigned char>());
    magic[3] = static_cast<char>(r.get<unsigned char>());
    if (std::memcmp(magic, expected, 4) != 0)
        throw FormatError("'" + path + "' does not start with the " +
                          std::string(expected, 4) + " magic");
}

void check_version(std::uint32_t version, const std::string& path) {
    if (version != 1)
        throw FormatError("'" + path + "' has unsupported format version " +
                          std::to_string(version) + " (this build reads version 1)");
}

}  // namespace

void cache_ensemble(const PathEnsemble& ens, const std::string& path) {
    ByteWriter w;
    w.put_bytes("JBSD", 4);
    w.put<std::uint32_t>(1);
    w.put<std::uint64_t>(ens.seed);
    w.put<std::uint64_t>(ens.n_paths);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ens.n_steps()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ens.dim_k));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ens.n_marks));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ens.dim_x));
    w.put<double>(ens.grid.horizon);
    w.put_bytes(ens.grid.times.data(), ens.grid.times.size() * 8);
    w.put_bytes(ens.dw.data(), ens.dw.size() * 8);
    w.put_bytes(ens.x.data(), ens.x.size() * 8);
    w.put_bytes(ens.dn.data(), ens.dn.size() * 4);
    w.flush(path);
}

PathEnsemble load_ensemble(const std::string& path) {
    ByteReader r(slurp(path), path);
    check_magic(r, "JBSD", path);
    check_version(r.get<std::uint32_t>(), path);

    PathEnsemble ens;
    ens.seed = r.get<std::uint64_t>();
    ens.n_paths = static_cast<std::size_t>(r.get<std::uint64_t>());
    const auto n_steps = static_cast<std::size_t>(r.get<std::uint32_t>());
    ens.dim_k = static_cast<int>(r.get<std::uint32_t>());
    ens.n_marks = static_cast<int>(r.get<std::uint32_t>());
    ens.dim_x = static_cast<int>(r.get<std::uint32_t>());

    const std::size_t payload =
        8 * (1 + (n_steps + 1) + ens.n_paths * n_steps * static_cast<std::size_t>(ens.dim_k) +
             ens.n_paths * (n_steps + 1) * static_cast<std::size_t>(ens.dim_x)) +
        4 * ens.n_paths * n_steps * static_cast<std::size_t>(ens.n_marks);
    r.expect_exact(payload);

    ens.grid.horizon = r.get<double>();
    r.get_doubles(ens.grid.times, n_steps + 1);
    r.get_doubles(ens.dw, ens.n_paths * n_steps * static_cast<std::size_t>(ens.dim_k));
    r.get_doubles(ens.x, ens.n_paths * (n_steps + 1) * static_cast<std::size_t>(ens.dim_x));
    r.get_u32s(ens.dn, ens.n_paths * n_steps * static_cast<std::size_t>(ens.n_marks));
    return ens;
}

void cache_solution(const DiscreteSolution& sol, const std::string& path) {
    ByteWriter w;
    w.put_bytes("JBSS", 4);
    w.put<std::uint32_t>(1);
    w.put<std::uint64_t>(sol.n_paths);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sol.n_steps));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sol.dim_d));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sol.dim_k));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sol.n_marks));
    w.put_string(sol.problem_name);
    w.put_string(sol.scheme_summary);
    w.put_bytes(sol.y.data(), sol.y.size() * 8);
    w.put_bytes(sol.z.data(), sol.z.size() * 8);
    w.put_bytes(sol.u.data(), sol.u.size() * 8);
    w.flush(path);
}

DiscreteSolution load_solution(const std::string& path) {
    ByteReader r(slurp(path), path);
    check_magic(r, "JBSS", path);
    check_version(r.get<std::uint32_t>(), path);

    DiscreteSolution sol;
    sol.n_paths = static_cast<std::size_t>(r.get<std::uint64_t>());
    sol.n_steps = static_cast<std::size_t>(r.get<std::uint32_t>());
    sol.dim_d = static_cast<int>(r.get<std::uint32_t>());
    sol.dim_k = static_cast<int>(r.get<std::uint32_t>());
    sol.n_marks = static_cast<int>(r.get<std::uint32_t>());
    sol.problem_name = r.get_string();
    sol.scheme_summary = r.get_string();

    const auto d = static_cast<std::size_t>(sol.dim_d);
    const std::size_t ny = sol.n_paths * sol.n_nodes() * d;
    const std::size_t nz = sol.n_paths * sol.n_steps * d * static_cast<std::size_t>(sol.dim_k);
    const std::size_t nu = sol.n_paths * sol.n_steps * d * static_cast<std::size_t>(sol.n_marks);
    r.expect_exact(8 * (ny + nz + nu));

    r.get_doubles(sol.y, ny);
    r.get_doubles(sol.z, nz);
    r.get_doubles(sol.u, nu);
    return sol;
}

}  // namespace jbsde
