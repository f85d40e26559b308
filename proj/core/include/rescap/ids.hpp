// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

namespace rescap {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer; used to fold several hashes into one seed.
std::uint64_t mix64(std::uint64_t x);

std::uint64_t combine_seed(std::initializer_list<std::uint64_t> parts);

/// Deterministic UUIDv4 string derived from a seed. Same seed, same id.
std::string uuid_v4(std::uint64_t seed);

/// Current UTC time as ISO-8601 with second precision ("2026-01-02T03:04:05Z").
std::string utc_timestamp();

}  // namespace rescap
