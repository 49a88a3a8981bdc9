#include <atomic>
#include <cstdlib>
#include <string>

#include "bayescal/common.hpp"
#include "bayescal/kernels.hpp"

namespace bayescal::kernels {
namespace {

const KernelTable* lookup(std::string_view name) {
    if (name == "scalar") return &scalar_table();
    if (name == "avx2") return avx2_table();
    if (name == "neon") return neon_table();
    if (name == "auto" || name.empty()) {
        if (const auto* t = avx2_table()) return t;
        if (const auto* t = neon_table()) return t;
        return &scalar_table();
    }
    return nullptr;
}

const KernelTable* initial() {
    const char* env = std::getenv("BAYESCAL_KERNELS");
    const KernelTable* t = lookup(env ? env : "auto");
    if (t == nullptr) {
        log_warning(std::string("BAYESCAL_KERNELS=") + env + " unavailable, using auto");
        t = lookup("auto");
    }
    return t;
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{initial()};
    return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void select(std::string_view name) {
    const KernelTable* t = lookup(name);
    if (t == nullptr) throw ValidationError("kernel backend unavailable: " + std::string(name));
    slot().store(t, std::memory_order_release);
}

}  // namespace bayescal::kernels
