#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace gtaseg {

// Fixed 64-byte alignment for every float buffer. SIMD reductions associate
// differently depending on pointer alignment, so pinning the alignment makes
// results a pure function of shapes and values instead of heap history.
template <typename T, std::size_t Align>
struct AlignedAlloc {
    using value_type = T;

    template <typename U>
    struct rebind {
        using other = AlignedAlloc<U, Align>;
    };

    AlignedAlloc() = default;
    template <typename U>
    AlignedAlloc(const AlignedAlloc<U, Align>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }

    void deallocate(T* p, std::size_t n) {
        ::operator delete(p, n * sizeof(T), std::align_val_t(Align));
    }

    template <typename U>
    bool operator==(const AlignedAlloc<U, Align>&) const {
        return true;
    }
};

using FloatBuffer = std::vector<float, AlignedAlloc<float, 64>>;

}  // namespace gtaseg
