#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "relcollab/core/tensor.hpp"

namespace relcollab::io {

/// Container of named tensors in one binary file. Used for checkpoints and
/// serialized relation matrices. Entries are written in insertion order so
/// files are byte-reproducible.

enum class TensorDType : uint8_t { f32 = 0, f64 = 1, u8 = 2 };

template <typename T> struct dtype_of;
template <> struct dtype_of<float>   { static constexpr TensorDType value = TensorDType::f32; };
template <> struct dtype_of<double>  { static constexpr TensorDType value = TensorDType::f64; };
template <> struct dtype_of<uint8_t> { static constexpr TensorDType value = TensorDType::u8; };

class TensorFileWriter {
public:
    explicit TensorFileWriter(const std::string& path) : f_(path, std::ios::binary), path_(path) {
        if (!f_) throw std::runtime_error("tensor file: cannot open for write: " + path);
        f_.write("RCTF", 4);
        uint32_t version = 1;
        write_raw(&version, 4);
        count_pos_ = f_.tellp();
        uint32_t count = 0;
        write_raw(&count, 4);
    }

    template <typename T>
    void add(const std::string& name, const Tensor<T>& t) {
        uint32_t nlen = static_cast<uint32_t>(name.size());
        write_raw(&nlen, 4);
        f_.write(name.data(), nlen);
        uint8_t dt = static_cast<uint8_t>(dtype_of<T>::value);
        write_raw(&dt, 1);
        uint32_t rank = static_cast<uint32_t>(t.shape.size());
        write_raw(&rank, 4);
        for (int64_t d : t.shape) write_raw(&d, 8);
        f_.write(reinterpret_cast<const char*>(t.ptr()),
                 static_cast<std::streamsize>(t.numel() * sizeof(T)));
        ++count_;
    }

    void finish() {
        f_.seekp(count_pos_);
        write_raw(&count_, 4);
        f_.flush();
        if (!f_) throw std::runtime_error("tensor file: write failed: " + path_);
        f_.close();
    }

private:
    void write_raw(const void* p, size_t n) { f_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    std::ofstream f_;
    std::string path_;
    std::streampos count_pos_;
    uint32_t count_ = 0;
};

struct TensorFileEntry {
    TensorDType dtype;
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes;

    template <typename T>
    Tensor<T> as() const {
        if (dtype != dtype_of<T>::value) throw std::runtime_error("tensor file: dtype mismatch");
        Tensor<T> t(shape);
        std::memcpy(t.ptr(), bytes.data(), bytes.size());
        return t;
    }
};

class TensorFileReader {
public:
    explicit TensorFileReader(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("tensor file: cannot open: " + path);
        char magic[4];
        f.read(magic, 4);
        if (!f || std::strncmp(magic, "RCTF", 4) != 0)
            throw std::runtime_error("tensor file: bad magic: " + path);
        uint32_t version = 0, count = 0;
        f.read(reinterpret_cast<char*>(&version), 4);
        f.read(reinterpret_cast<char*>(&count), 4);
        if (version != 1) throw std::runtime_error("tensor file: unsupported version: " + path);
        for (uint32_t i = 0; i < count; ++i) {
            uint32_t nlen = 0;
            f.read(reinterpret_cast<char*>(&nlen), 4);
            std::string name(nlen, '\0');
            f.read(name.data(), nlen);
            uint8_t dt = 0;
            f.read(reinterpret_cast<char*>(&dt), 1);
            uint32_t rank = 0;
            f.read(reinterpret_cast<char*>(&rank), 4);
            TensorFileEntry e;
            e.dtype = static_cast<TensorDType>(dt);
            e.shape.resize(rank);
            for (uint32_t a = 0; a < rank; ++a) f.read(reinterpret_cast<char*>(&e.shape[a]), 8);
            size_t elem = e.dtype == TensorDType::u8 ? 1 : (e.dtype == TensorDType::f32 ? 4 : 8);
            e.bytes.resize(static_cast<size_t>(Tensor<float>::numel_of(e.shape)) * elem);
            f.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
            order_.push_back(name);
            entries_.emplace(std::move(name), std::move(e));
        }
        if (!f) throw std::runtime_error("tensor file: truncated: " + path);
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    const TensorFileEntry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::runtime_error("tensor file: missing entry: " + name);
        return it->second;
    }
    template <typename T>
    Tensor<T> get(const std::string& name) const { return entry(name).template as<T>(); }
    const std::vector<std::string>& names() const { return order_; }

private:
    std::map<std::string, TensorFileEntry> entries_;
    std::vector<std::string> order_;
};

}  // namespace relcollab::io
