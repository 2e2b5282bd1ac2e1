#pragma once

// Desk-scale stand-in for a distributed filesystem. A dataset is a directory
// of part files plus a .meta sidecar recording schema, byte size and a
// logical mtime. Writers stage into a hidden directory and commit with a
// rename, so readers never observe partial datasets. A small lease registry
// turns concurrent writer/reader collisions on one path into errors instead
// of corruption.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "restore/plan.hpp"
#include "restore/record.hpp"

namespace restore {

namespace fs = std::filesystem;

struct DfsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetMeta {
    SchemaDef schema;
    uint64_t bytes = 0;
    int64_t mtime = 0; // microseconds since epoch, strictly increasing per path
};

class Dfs;

// Append-only handle for one part file of a staged dataset.
class PartWriter {
public:
    PartWriter() = default;
    PartWriter(fs::path file, uint64_t* bytes_cell) : bytes_cell_(bytes_cell) {
        out_.open(file, std::ios::binary | std::ios::app);
        if (!out_) throw DfsError("cannot open part file " + file.string());
    }

    void append(std::string_view line) {
        out_.write(line.data(), static_cast<std::streamsize>(line.size()));
        out_.put('\n');
        *bytes_cell_ += line.size() + 1;
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    uint64_t* bytes_cell_ = nullptr;
};

class DatasetWriter {
public:
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;
    DatasetWriter(DatasetWriter&& o) noexcept
        : dfs_(o.dfs_), path_(std::move(o.path_)), schema_(std::move(o.schema_)),
          num_parts_(o.num_parts_), overwrite_(o.overwrite_),
          staging_(std::move(o.staging_)), part_bytes_(std::move(o.part_bytes_)),
          done_(o.done_) {
        o.done_ = true; // the moved-from shell owns nothing
    }
    ~DatasetWriter();

    PartWriter open_part(int index);
    // Atomically publishes the dataset and releases the write lease.
    void commit();
    // Drops staged data; automatic on destruction if commit was never called.
    void abort();

    const std::string& path() const { return path_; }
    uint64_t bytes_written() const;
    int parts() const { return num_parts_; }

private:
    friend class Dfs;
    DatasetWriter(Dfs* dfs, std::string path, SchemaDef schema, int num_parts,
                  bool overwrite, fs::path staging);

    Dfs* dfs_;
    std::string path_;
    SchemaDef schema_;
    int num_parts_;
    bool overwrite_;
    fs::path staging_;
    std::vector<uint64_t> part_bytes_;
    bool done_ = false;
};

// RAII read lease over one dataset path.
class ReadLease {
public:
    ReadLease() = default;
    ReadLease(Dfs* dfs, std::string path) : dfs_(dfs), path_(std::move(path)) {}
    ReadLease(ReadLease&& o) noexcept { *this = std::move(o); }
    ReadLease& operator=(ReadLease&& o) noexcept {
        release();
        std::swap(dfs_, o.dfs_);
        std::swap(path_, o.path_);
        return *this;
    }
    ~ReadLease() { release(); }
    void release();

private:
    Dfs* dfs_ = nullptr;
    std::string path_;
};

class Dfs {
public:
    explicit Dfs(fs::path root) : root_(std::move(root)) {
        fs::create_directories(root_);
        fs::create_directories(root_ / ".staging");
        fs::create_directories(root_ / ".work");
    }

    const fs::path& root() const { return root_; }
    fs::path work_root() const { return root_ / ".work"; }

    static void check_path(const std::string& path) {
        if (path.empty() || path.front() == '/' || path.back() == '/')
            throw DfsError("bad dataset path '" + path + "'");
        for (const auto& comp : split(path, '/'))
            if (comp.empty() || comp[0] == '.')
                throw DfsError("bad dataset path '" + path + "'");
    }

    bool exists(const std::string& path) const {
        return fs::exists(dir_of(path) / ".meta");
    }

    DatasetMeta stat(const std::string& path) const {
        std::ifstream in(dir_of(path) / ".meta");
        if (!in) throw DfsError("no such dataset: " + path);
        DatasetMeta meta;
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("schema=", 0) == 0)
                meta.schema = schema_from_text(line.substr(7));
            else if (line.rfind("bytes=", 0) == 0)
                meta.bytes = std::stoull(line.substr(6));
            else if (line.rfind("mtime=", 0) == 0)
                meta.mtime = std::stoll(line.substr(6));
        }
        return meta;
    }

    DatasetWriter create(const std::string& path, SchemaDef schema, int num_parts,
                         bool overwrite = false) {
        check_path(path);
        if (num_parts < 0) throw DfsError("negative part count");
        {
            std::lock_guard lock(mu_);
            if (!overwrite && fs::exists(dir_of(path) / ".meta"))
                throw DfsError("dataset already exists: " + path);
            Lease& l = leases_[path];
            if (l.writer) throw DfsError("concurrent writers on dataset: " + path);
            if (l.readers > 0)
                throw DfsError("dataset is being read while written: " + path);
            l.writer = true;
        }
        fs::path staging =
            root_ / ".staging" / ("w" + std::to_string(staging_token_.fetch_add(1)));
        fs::create_directories(staging);
        return DatasetWriter(this, path, std::move(schema), num_parts, overwrite,
                             staging);
    }

    ReadLease acquire_read(const std::string& path) {
        std::lock_guard lock(mu_);
        if (!fs::exists(dir_of(path) / ".meta"))
            throw DfsError("no such dataset: " + path);
        Lease& l = leases_[path];
        if (l.writer) throw DfsError("dataset is being written while read: " + path);
        ++l.readers;
        return ReadLease(this, path);
    }

    // Part files of a dataset in part order, with their byte sizes.
    std::vector<std::pair<fs::path, uint64_t>> part_files(const std::string& path) const {
        fs::path dir = dir_of(path);
        if (!fs::exists(dir / ".meta")) throw DfsError("no such dataset: " + path);
        std::vector<fs::path> parts;
        for (const auto& entry : fs::directory_iterator(dir)) {
            std::string name = entry.path().filename().string();
            if (name.rfind("part-", 0) == 0) parts.push_back(entry.path());
        }
        std::sort(parts.begin(), parts.end());
        std::vector<std::pair<fs::path, uint64_t>> out;
        for (auto& p : parts) out.emplace_back(p, fs::file_size(p));
        return out;
    }

    void for_each_line(const std::string& path,
                       const std::function<void(std::string_view)>& fn) const {
        for (auto& [file, size] : part_files(path)) {
            std::ifstream in(file, std::ios::binary);
            std::string line;
            while (std::getline(in, line)) fn(line);
        }
    }

    std::vector<std::string> read_lines(const std::string& path) const {
        std::vector<std::string> lines;
        for_each_line(path, [&](std::string_view l) { lines.emplace_back(l); });
        return lines;
    }

    std::vector<std::string> read_lines_sorted(const std::string& path) const {
        auto lines = read_lines(path);
        std::sort(lines.begin(), lines.end());
        return lines;
    }

    void remove(const std::string& path) {
        std::lock_guard lock(mu_);
        auto it = leases_.find(path);
        if (it != leases_.end() && (it->second.writer || it->second.readers > 0))
            throw DfsError("dataset is in use: " + path);
        fs::path dir = dir_of(path);
        if (!fs::exists(dir / ".meta")) throw DfsError("no such dataset: " + path);
        fs::remove_all(dir);
        prune_empty_dirs(dir.parent_path());
    }

    std::vector<std::string> list() const {
        std::vector<std::string> out;
        walk(root_, "", out);
        std::sort(out.begin(), out.end());
        return out;
    }

    // Rewrites a dataset as a single part with globally sorted lines.
    void canonicalize(const std::string& path) {
        auto lines = read_lines_sorted(path);
        SchemaDef schema = stat(path).schema;
        auto writer = create(path, schema, 1, /*overwrite=*/true);
        auto part = writer.open_part(0);
        for (const auto& l : lines) part.append(l);
        part.flush();
        writer.commit();
    }

    fs::path dir_of(const std::string& path) const { return root_ / path; }

private:
    friend class DatasetWriter;
    friend class ReadLease;

    struct Lease {
        bool writer = false;
        int readers = 0;
    };

    void release_writer(const std::string& path) {
        std::lock_guard lock(mu_);
        leases_[path].writer = false;
    }
    void release_reader(const std::string& path) {
        std::lock_guard lock(mu_);
        --leases_[path].readers;
    }

    void publish(const std::string& path, const fs::path& staging,
                 const SchemaDef& schema, uint64_t bytes, bool overwrite) {
        std::lock_guard lock(mu_);
        fs::path dir = dir_of(path);
        int64_t prev_mtime = 0;
        if (fs::exists(dir / ".meta")) {
            if (!overwrite) {
                leases_[path].writer = false;
                throw DfsError("dataset already exists: " + path);
            }
            std::ifstream in(dir / ".meta");
            std::string line;
            while (std::getline(in, line))
                if (line.rfind("mtime=", 0) == 0) prev_mtime = std::stoll(line.substr(6));
        }
        int64_t now = std::chrono::duration_cast<std::chrono::microseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
        int64_t mtime = std::max(now, prev_mtime + 1);
        {
            std::ofstream meta(staging / ".meta", std::ios::binary);
            meta << "schema=" << schema_to_text(schema) << "\n";
            meta << "bytes=" << bytes << "\n";
            meta << "mtime=" << mtime << "\n";
        }
        if (fs::exists(dir)) fs::remove_all(dir);
        fs::create_directories(dir.parent_path());
        fs::rename(staging, dir);
        leases_[path].writer = false;
    }

    void discard(const std::string& path, const fs::path& staging) {
        std::lock_guard lock(mu_);
        std::error_code ec;
        fs::remove_all(staging, ec);
        leases_[path].writer = false;
    }

    void prune_empty_dirs(fs::path dir) {
        std::error_code ec;
        while (dir != root_ && fs::is_directory(dir, ec) && fs::is_empty(dir, ec)) {
            fs::remove(dir, ec);
            if (ec) break;
            dir = dir.parent_path();
        }
    }

    void walk(const fs::path& dir, const std::string& prefix,
              std::vector<std::string>& out) const {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_directory()) continue;
            std::string name = entry.path().filename().string();
            if (name.empty() || name[0] == '.') continue;
            std::string logical = prefix.empty() ? name : prefix + "/" + name;
            if (fs::exists(entry.path() / ".meta"))
                out.push_back(logical);
            else
                walk(entry.path(), logical, out);
        }
    }

    fs::path root_;
    mutable std::mutex mu_;
    std::map<std::string, Lease> leases_;
    std::atomic<uint64_t> staging_token_{0};
};

inline DatasetWriter::DatasetWriter(Dfs* dfs, std::string path, SchemaDef schema,
                                    int num_parts, bool overwrite, fs::path staging)
    : dfs_(dfs), path_(std::move(path)), schema_(std::move(schema)),
      num_parts_(num_parts), overwrite_(overwrite), staging_(std::move(staging)),
      part_bytes_(static_cast<size_t>(num_parts), 0) {}

inline DatasetWriter::~DatasetWriter() {
    if (!done_) abort();
}

inline PartWriter DatasetWriter::open_part(int index) {
    if (index < 0 || index >= num_parts_) throw DfsError("part index out of range");
    char name[16];
    std::snprintf(name, sizeof name, "part-%05d", index);
    return PartWriter(staging_ / name, &part_bytes_[static_cast<size_t>(index)]);
}

inline uint64_t DatasetWriter::bytes_written() const {
    uint64_t total = 0;
    for (uint64_t b : part_bytes_) total += b;
    return total;
}

inline void DatasetWriter::commit() {
    if (done_) throw DfsError("writer already finished");
    for (int i = 0; i < num_parts_; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "part-%05d", i);
        fs::path file = staging_ / name;
        if (!fs::exists(file)) std::ofstream(file, std::ios::binary).flush();
    }
    dfs_->publish(path_, staging_, schema_, bytes_written(), overwrite_);
    done_ = true;
}

inline void DatasetWriter::abort() {
    if (done_) return;
    dfs_->discard(path_, staging_);
    done_ = true;
}

inline void ReadLease::release() {
    if (dfs_) dfs_->release_reader(path_);
    dfs_ = nullptr;
    path_.clear();
}

} // namespace restore
