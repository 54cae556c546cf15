#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace finest {

/// Read-only view of the externalized prompt assets (rubrics, few-shot
/// exemplars, instruction templates). Files are read on every call so a
/// swapped asset takes effect without a restart.
class AssetStore {
public:
    explicit AssetStore(std::filesystem::path root);

    /// The directory compiled in at build time (the repository's assets/).
    static AssetStore shipped();

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path(std::string_view relative) const;
    bool exists(std::string_view relative) const;

    /// Throws Error(missing_template) when the file is absent or unreadable.
    std::string load(std::string_view relative) const;

    /// SHA-256 of the asset bytes, for run metadata.
    std::string hash(std::string_view relative) const;

private:
    std::filesystem::path root_;
};

}  // namespace finest
