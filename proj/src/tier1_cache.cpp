#include "tiered/tier1_cache.hpp"

#include <limits>
#include <string>

#include "tiered/errors.hpp"
#include "tiered/rng.hpp"

namespace tiered {

std::size_t PageIdHash::operator()(const PageId& id) const noexcept {
    return static_cast<std::size_t>(mix64(id.page ^ mix64(id.file)));
}

std::string_view to_string(Mapping mapping) {
    switch (mapping) {
        case Mapping::RoundRobin: return "round_robin";
        case Mapping::Random: return "random";
        case Mapping::Block: return "block";
        case Mapping::BlockCyclic: return "block_cyclic";
    }
    return "?";
}

Mapping mapping_from_string(std::string_view name) {
    if (name == "round_robin") return Mapping::RoundRobin;
    if (name == "random") return Mapping::Random;
    if (name == "block") return Mapping::Block;
    if (name == "block_cyclic") return Mapping::BlockCyclic;
    throw ConfigError("cache.mapping", "unknown mapping '" + std::string(name) + "'");
}

void validate(const CacheConfig& config) {
    if (config.n_lines == 0) throw ConfigError("cache.n_lines", "must be at least 1");
    if (config.line_size < 512 || (config.line_size & (config.line_size - 1)) != 0)
        throw ConfigError("cache.line_size", "must be a power of two >= 512");
    if (config.n_processes == 0) throw ConfigError("cache.n_processes", "must be at least 1");
    if (config.mapping == Mapping::BlockCyclic && config.block_size == 0)
        throw ConfigError("cache.block_size", "must be at least 1");
    if (config.mapping == Mapping::Block && config.total_pages == 0)
        throw ConfigError("cache.total_pages", "block mapping needs the total page count");
}

std::size_t map_page(std::uint64_t page, const CacheConfig& config) {
    const std::uint64_t procs = config.n_processes;
    switch (config.mapping) {
        case Mapping::RoundRobin:
            return page % procs;
        case Mapping::Random:
            return mix64(page) % procs;
        case Mapping::Block: {
            if (config.total_pages == 0)
                throw ConfigError("cache.total_pages", "block mapping needs the total page count");
            const std::uint64_t per_proc = (config.total_pages + procs - 1) / procs;
            // Pages past total_pages land on the last process.
            return static_cast<std::size_t>(std::min(page / per_proc, procs - 1));
        }
        case Mapping::BlockCyclic:
            return (page / config.block_size) % procs;
    }
    throw ConfigError("cache.mapping", "unhandled mapping");
}

Tier1Cache::Tier1Cache(std::size_t n_lines) : lines_(n_lines) {
    if (n_lines == 0) throw ConfigError("cache.n_lines", "must be at least 1");
    free_slots_.reserve(n_lines);
    for (std::size_t i = n_lines; i-- > 0;) free_slots_.push_back(i);
    index_.reserve(n_lines);
}

const CacheLine* Tier1Cache::find(const PageId& page) const {
    const auto it = index_.find(page);
    return it == index_.end() ? nullptr : &lines_[it->second];
}

AccessOutcome Tier1Cache::access(const PageId& page, RequestKind kind, std::uint64_t now) {
    const auto it = index_.find(page);
    if (it == index_.end()) return AccessOutcome::Miss;
    CacheLine& line = lines_[it->second];
    if (line.freq != std::numeric_limits<std::uint64_t>::max()) ++line.freq;
    line.last_access = now;
    if (kind == RequestKind::Write) line.dirty = true;
    return AccessOutcome::Hit;
}

std::optional<Eviction> Tier1Cache::fill(const PageId& page, std::uint64_t now,
                                         const VictimSelector& select) {
    if (contains(page)) throw InvariantError("fill: page already resident");
    std::optional<Eviction> evicted;
    std::size_t slot = 0;
    if (!free_slots_.empty()) {
        slot = free_slots_.back();
        free_slots_.pop_back();
    } else {
        const PageId victim = select(*this);
        const auto it = index_.find(victim);
        if (it == index_.end()) throw InvariantError("fill: victim selector chose a non-resident page");
        slot = it->second;
        evicted = Eviction{victim, lines_[slot].dirty};
        index_.erase(it);
    }
    lines_[slot] = CacheLine{page, true, false, now, 1};
    index_.emplace(page, slot);
    return evicted;
}

void Tier1Cache::mark_dirty(const PageId& page) {
    const auto it = index_.find(page);
    if (it == index_.end()) throw InvariantError("mark_dirty: page not resident");
    lines_[it->second].dirty = true;
}

}  // namespace tiered
