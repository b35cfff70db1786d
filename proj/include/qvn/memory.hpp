// Copyright 2026 The qvn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Addressed store of program copies. Copies are consumed on fetch and come
// back only by re-synthesis from the classical description.
//
// A MemoryUnit has a single owner; nothing here locks. Fetched copies are
// plain values and may be shared freely.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qvn/description.hpp"
#include "qvn/uqt.hpp"

namespace qvn {

/// Program for the gate product of `desc`, with correction table and
/// symmetric factors.
inline StoredProgram synthesize(const ProgramDescription &desc, ProgramOptions opts = {}) {
    validate(desc);
    return StoredProgram::from_unitary(synthesize_unitary(desc), desc, opts);
}

enum class SlotKind { Program, Data };

inline const char *slot_kind_name(SlotKind k) {
    return k == SlotKind::Data ? "data" : "program";
}

struct MemorySlot {
    std::size_t address = 0;
    SlotKind kind = SlotKind::Program;
    std::optional<ProgramDescription> description;  // absent for captured states
    std::vector<StoredProgram> copies;
};

enum class AuditOp { Store, Capture, Deposit, Fetch, Restore };

inline const char *audit_op_name(AuditOp op) {
    switch (op) {
        case AuditOp::Store:
            return "store";
        case AuditOp::Capture:
            return "capture";
        case AuditOp::Deposit:
            return "deposit";
        case AuditOp::Fetch:
            return "fetch";
        default:
            return "restore";
    }
}

struct AuditRecord {
    std::uint64_t sequence = 0;
    AuditOp op = AuditOp::Store;
    std::size_t address = 0;
    std::size_t count = 0;         // copies added or removed
    std::size_t copies_after = 0;  // slot total after the operation
};

/// Sealing of descriptions in transit. The only codec shipped is the
/// identity; key exchange and signatures live outside this library.
struct PlainCodec {
    std::string seal(std::string_view text) const {
        return std::string(text);
    }
    std::string open(std::string_view sealed) const {
        return std::string(sealed);
    }
};

class MemoryUnit {
   public:
    /// New slot holding `copies` synthesized instances of `desc`. Data
    /// slots skip the composition tables until a copy is fetched for
    /// composition.
    std::size_t store(const ProgramDescription &desc, std::size_t copies, SlotKind kind = SlotKind::Program,
                      std::optional<std::size_t> address = {}) {
        if (copies == 0) {
            throw ArgumentError("store: copies must be at least 1");
        }
        const StoredProgram proto = synthesize(desc, options_for(kind));
        MemorySlot slot;
        slot.address = claim(address);
        slot.kind = kind;
        slot.description = desc;
        slot.copies.assign(copies, proto);
        const std::size_t addr = slot.address;
        slots_.emplace(addr, std::move(slot));
        log(AuditOp::Store, addr, copies);
        return addr;
    }

    /// Slot for states handed over as they are. Without a description the
    /// slot cannot be restored.
    std::size_t capture(std::vector<StoredProgram> copies, SlotKind kind = SlotKind::Data,
                        std::optional<std::size_t> address = {},
                        std::optional<ProgramDescription> description = {}) {
        if (copies.empty()) {
            throw ArgumentError("capture: no copies given");
        }
        for (const auto &c : copies) {
            if (c.d() != copies.front().d()) {
                throw DimensionError("capture: copies differ in dimension");
            }
        }
        MemorySlot slot;
        slot.address = claim(address);
        slot.kind = kind;
        slot.description = std::move(description);
        slot.copies = std::move(copies);
        const std::size_t addr = slot.address;
        const std::size_t n = slot.copies.size();
        slots_.emplace(addr, std::move(slot));
        log(AuditOp::Capture, addr, n);
        return addr;
    }

    /// Adds one more copy to an existing slot.
    void deposit(std::size_t address, StoredProgram p) {
        MemorySlot &s = slot_mut(address);
        if (!s.copies.empty() && s.copies.front().d() != p.d()) {
            throw DimensionError("deposit: program dimension differs from slot " + std::to_string(address));
        }
        s.copies.push_back(std::move(p));
        log(AuditOp::Deposit, address, 1);
    }

    /// Removes and returns one copy.
    StoredProgram fetch_consume(std::size_t address) {
        MemorySlot &s = slot_mut(address);
        if (s.copies.empty()) {
            throw OutOfCopiesError("fetch: slot " + std::to_string(address) + " has no copies left; restore it");
        }
        StoredProgram p = std::move(s.copies.back());
        s.copies.pop_back();
        log(AuditOp::Fetch, address, 1);
        return p;
    }

    /// fetch_consume, then fill in whatever composition needs (correction
    /// table and symmetric factors) if the slot was stored without them.
    StoredProgram fetch_for_compose(std::size_t address) {
        StoredProgram p = fetch_consume(address);
        if (p.has_corrections() && p.has_factors()) {
            return p;
        }
        return StoredProgram(p.vector(), p.description(), ProgramOptions{true, true, p.family()});
    }

    /// Appends `copies` fresh instances synthesized from the slot's
    /// description and returns the new total.
    std::size_t restore(std::size_t address, std::size_t copies) {
        if (copies == 0) {
            throw ArgumentError("restore: copies must be at least 1");
        }
        MemorySlot &s = slot_mut(address);
        if (!s.description) {
            throw NotRestorableError("restore: slot " + std::to_string(address) + " has no classical description");
        }
        const StoredProgram proto = synthesize(*s.description, options_for(s.kind));
        s.copies.insert(s.copies.end(), copies, proto);
        log(AuditOp::Restore, address, copies);
        return s.copies.size();
    }

    /// Download path: open a sealed description, check it matches the slot
    /// exactly, then restore.
    template <typename Codec = PlainCodec>
    std::size_t restore_from_text(std::size_t address, std::string_view sealed, std::size_t copies,
                                  const Codec &codec = Codec{}) {
        const ProgramDescription d = deserialize(codec.open(sealed));
        const MemorySlot &s = slot(address);
        if (!s.description) {
            throw NotRestorableError("restore: slot " + std::to_string(address) + " has no classical description");
        }
        if (!(d == *s.description)) {
            throw ValidationError("restore: downloaded description differs from slot " + std::to_string(address));
        }
        return restore(address, copies);
    }

    const MemorySlot &slot(std::size_t address) const {
        const auto it = slots_.find(address);
        if (it == slots_.end()) {
            throw NotFoundError("memory: no slot at address " + std::to_string(address));
        }
        return it->second;
    }
    std::size_t copies(std::size_t address) const {
        return slot(address).copies.size();
    }
    bool contains(std::size_t address) const {
        return slots_.count(address) != 0;
    }
    std::vector<std::size_t> addresses() const {
        std::vector<std::size_t> out;
        for (const auto &[a, s] : slots_) {
            out.push_back(a);
        }
        return out;
    }
    const std::vector<AuditRecord> &audit_log() const {
        return audit_;
    }

    /// Replays the audit log and compares with current copy counts; also
    /// checks each copy against its description. Throws ValidationError.
    void verify(double fidelity_tol = 1e-9) const {
        std::map<std::size_t, long long> count;
        for (const auto &r : audit_) {
            const long long c = static_cast<long long>(r.count);
            count[r.address] += r.op == AuditOp::Fetch ? -c : c;
            if (count[r.address] != static_cast<long long>(r.copies_after)) {
                throw ValidationError("memory audit: record " + std::to_string(r.sequence) + " is inconsistent");
            }
        }
        for (const auto &[a, s] : slots_) {
            if (count[a] != static_cast<long long>(s.copies.size())) {
                throw ValidationError("memory audit: slot " + std::to_string(a) + " holds " +
                                      std::to_string(s.copies.size()) + " copies, log says " +
                                      std::to_string(count[a]));
            }
            if (!s.description) {
                continue;
            }
            const CVector ref = vec(synthesize_unitary(*s.description).matrix());
            for (const auto &c : s.copies) {
                if (program_fidelity(c.vector(), ref) < 1.0 - fidelity_tol) {
                    throw ValidationError("memory audit: a copy in slot " + std::to_string(a) +
                                          " does not match its description");
                }
            }
        }
    }

   private:
    static ProgramOptions options_for(SlotKind kind) {
        if (kind == SlotKind::Data) {
            return ProgramOptions{false, false, std::nullopt};
        }
        return ProgramOptions{};
    }

    std::size_t claim(std::optional<std::size_t> address) {
        if (!address) {
            return next_address_++;
        }
        if (slots_.count(*address)) {
            throw ArgumentError("memory: address " + std::to_string(*address) + " is already in use");
        }
        next_address_ = std::max(next_address_, *address + 1);
        return *address;
    }

    MemorySlot &slot_mut(std::size_t address) {
        const auto it = slots_.find(address);
        if (it == slots_.end()) {
            throw NotFoundError("memory: no slot at address " + std::to_string(address));
        }
        return it->second;
    }

    void log(AuditOp op, std::size_t address, std::size_t count) {
        audit_.push_back({audit_.size(), op, address, count, slots_.at(address).copies.size()});
    }

    std::map<std::size_t, MemorySlot> slots_;
    std::vector<AuditRecord> audit_;
    std::size_t next_address_ = 0;
};

}  // namespace qvn
