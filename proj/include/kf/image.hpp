#pragma once

#include "kf/ranges.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kf {

/// A kernel function exported in the image's symbol table.
struct Symbol {
    std::string name;
    uint64_t start = 0; // virtual address
    uint64_t size = 0;  // bytes, > 0

    uint64_t end() const { return start + size; }
    ByteRange extent() const { return {start, size}; }
    bool contains(uint64_t addr) const { return addr >= start && addr < end(); }
};

/// A straight-line instruction run inside one symbol.
struct BasicBlock {
    uint64_t start = 0;
    uint64_t size = 0;
    std::string parent; // owning symbol name

    uint64_t end() const { return start + size; }
    ByteRange extent() const { return {start, size}; }
    bool contains(uint64_t addr) const { return addr >= start && addr < end(); }
};

/// The vanilla kernel bundle: text bytes plus the metadata tables needed to
/// profile, specialize and simulate against it. Immutable after construction;
/// any number of threads may read one concurrently.
///
/// On-disk form is a directory of small files (see load/save): manifest.json,
/// text.bin, symbols.tsv, blocks.tsv, syscalls.tsv, callgraph.tsv,
/// irq_tophalf.txt.
class KernelImage {
public:
    using CallEdge = std::pair<std::string, std::string>; // caller -> callee

    /// Loads and validates a bundle directory.
    /// Throws MalformedBundle on missing/bad files, InvariantViolation with
    /// the first violated rule named.
    static KernelImage load(const std::filesystem::path& bundle_dir);

    /// Builds an image from in-memory parts and validates it.
    static KernelImage from_parts(uint64_t base_vaddr, std::vector<uint8_t> text,
                                  std::vector<Symbol> symbols, std::vector<BasicBlock> blocks,
                                  std::map<std::string, std::string> syscall_entries,
                                  std::vector<CallEdge> call_graph,
                                  std::set<std::string> top_half_handlers,
                                  uint64_t page_size = 4096);

    /// Writes the bundle directory; load(save(x)) == x field-for-field.
    void save(const std::filesystem::path& bundle_dir) const;

    uint64_t base_vaddr() const { return base_vaddr_; }
    const std::vector<uint8_t>& text() const { return text_; }
    uint64_t text_size() const { return text_.size(); }
    uint64_t text_end() const { return base_vaddr_ + text_.size(); }
    bool in_text(uint64_t addr) const { return addr >= base_vaddr_ && addr < text_end(); }

    const std::vector<Symbol>& symbols() const { return symbols_; } // sorted by start
    const std::vector<BasicBlock>& blocks() const { return blocks_; } // sorted by start
    const std::map<std::string, std::string>& syscall_entries() const { return syscall_entries_; }
    const std::vector<CallEdge>& call_graph() const { return call_graph_; }
    const std::set<std::string>& top_half_handlers() const { return top_half_handlers_; }
    uint64_t page_size() const { return page_size_; }

    // ceil(len(text) / page_size)
    uint64_t page_count() const { return (text_.size() + page_size_ - 1) / page_size_; }

    /// The unique symbol whose extent contains addr, or nullptr.
    const Symbol* symbol_at(uint64_t addr) const;

    /// The unique block whose extent contains addr, or nullptr (gaps between
    /// a symbol's blocks resolve to no block).
    const BasicBlock* block_at(uint64_t addr) const;

    const Symbol* find_symbol(std::string_view name) const;

    /// floor((addr - base_vaddr) / page_size); throws OutOfRange when addr
    /// is outside the text range.
    uint64_t page_index(uint64_t addr) const;

    /// Page extent clamped to the text range (the tail page of a text whose
    /// length is not page-aligned is shorter than page_size).
    ByteRange page_extent(uint64_t page) const;

private:
    KernelImage() = default;
    void index();
    void validate() const; // throws InvariantViolation naming the first broken rule

    uint64_t base_vaddr_ = 0;
    std::vector<uint8_t> text_;
    std::vector<Symbol> symbols_;
    std::vector<BasicBlock> blocks_;
    std::map<std::string, std::string> syscall_entries_;
    std::vector<CallEdge> call_graph_;
    std::set<std::string> top_half_handlers_;
    uint64_t page_size_ = 4096;

    std::map<std::string_view, size_t> symbol_index_; // name -> position in symbols_
};

} // namespace kf
