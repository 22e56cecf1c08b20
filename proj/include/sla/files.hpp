#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sla {

namespace fs = std::filesystem;

/// Throws Error(Io) if the file cannot be read.
std::string read_file(const fs::path& path);

/// Writes to a temporary sibling and renames it over `path`, so readers never
/// see a partial file.
void write_file_atomic(const fs::path& path, std::string_view bytes);

/// File layout of one transcript inside a data directory.
struct SlaPaths {
  fs::path dir;
  std::string id;

  fs::path root() const { return dir / (id + ".root.xml"); }
  fs::path descriptor(std::string_view scheme) const {
    return dir / (id + ".d." + std::string(scheme) + ".xml");
  }
  fs::path changes() const { return dir / (id + ".changes.xml"); }
  fs::path index() const { return dir / (id + ".index.xml"); }
  fs::path lock() const { return dir / (id + ".lock"); }

  /// Schemes of every `<id>.d.<scheme>.xml` present, sorted.
  std::vector<std::string> descriptor_schemes() const;
};

/// Advisory single-writer lock: creates the lock file exclusively and removes
/// it on destruction. Throws Error(LockHeld) if another writer holds it.
class WriterLock {
 public:
  explicit WriterLock(fs::path path);
  ~WriterLock();
  WriterLock(const WriterLock&) = delete;
  WriterLock& operator=(const WriterLock&) = delete;

 private:
  fs::path path_;
};

}  // namespace sla
