#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tiered/workload.hpp"

namespace tiered {

/// Cache tag: a page of a file.
struct PageId {
    std::uint64_t file = 0;
    std::uint64_t page = 0;

    auto operator<=>(const PageId&) const = default;
};

struct PageIdHash {
    std::size_t operator()(const PageId& id) const noexcept;
};

constexpr std::uint64_t page_of(std::uint64_t offset, std::uint64_t line_size) {
    return offset / line_size;
}

enum class Mapping : std::uint8_t { RoundRobin, Random, Block, BlockCyclic };

std::string_view to_string(Mapping mapping);
Mapping mapping_from_string(std::string_view name);

struct CacheConfig {
    std::size_t n_lines = 64;
    std::uint64_t line_size = 8192;
    std::size_t n_processes = 1;
    Mapping mapping = Mapping::RoundRobin;
    std::uint64_t block_size = 1;   // pages per block, BlockCyclic
    std::uint64_t total_pages = 0;  // Block only; 0 means unknown
};

/// Throws ConfigError on the first invalid field.
void validate(const CacheConfig& config);

/// Owning process of a page.
///   RoundRobin   page mod P
///   Random       mix64(page) mod P
///   Block        page / ceil(total_pages / P)
///   BlockCyclic  (page / block_size) mod P
std::size_t map_page(std::uint64_t page, const CacheConfig& config);

struct CacheLine {
    PageId tag;
    bool valid = false;
    bool dirty = false;
    std::uint64_t last_access = 0;  // logical time
    std::uint64_t freq = 0;
};

enum class AccessOutcome : std::uint8_t { Hit, Miss, PrefetchHit };

struct AccessResult {
    AccessOutcome outcome = AccessOutcome::Miss;
    std::size_t owner = 0;
    PageId page;
};

struct Eviction {
    PageId page;
    bool dirty = false;
};

/// Read-only view the eviction experts select from.
using VictimSelector = std::function<PageId(const class Tier1Cache&)>;

/// One process's fully-associative, write-back page cache.
class Tier1Cache {
public:
    explicit Tier1Cache(std::size_t n_lines);

    std::size_t capacity() const noexcept { return lines_.size(); }
    std::size_t size() const noexcept { return index_.size(); }
    bool full() const noexcept { return size() == capacity(); }
    bool contains(const PageId& page) const { return index_.contains(page); }

    /// Resident line for `page`, or nullptr.
    const CacheLine* find(const PageId& page) const;

    std::span<const CacheLine> lines() const noexcept { return lines_; }

    /// Hit updates freq and last_access, and sets dirty on a write.
    /// A miss leaves the cache untouched.
    AccessOutcome access(const PageId& page, RequestKind kind, std::uint64_t now);

    /// Installs a non-resident page (valid, clean, freq 1). When no slot is
    /// free the selector picks the victim, which is returned.
    std::optional<Eviction> fill(const PageId& page, std::uint64_t now, const VictimSelector& select);

    /// Marks a resident page dirty, as a write-allocate store does after a fill.
    void mark_dirty(const PageId& page);

private:
    std::vector<CacheLine> lines_;
    std::vector<std::size_t> free_slots_;
    std::unordered_map<PageId, std::size_t, PageIdHash> index_;
};

}  // namespace tiered
