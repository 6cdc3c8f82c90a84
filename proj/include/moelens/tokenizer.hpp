#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace moelens::tok {

enum class TokenKind { Special, Atom, Amino, Byte, Merged };

struct TokenEntry {
    TokenKind kind;
    std::string key;      // unique vocabulary key
    std::string surface;  // text the token renders to on decode
};

enum class EntityKind { Molecule, Protein };

struct EntitySpan {
    EntityKind kind;
    std::string text;   // interior text, without the identifier wrappers
    std::size_t start;  // character offsets in the source document
    std::size_t end;
};

struct TokenSequence {
    std::vector<int> ids;
    std::size_t length() const { return ids.size(); }
};

inline const std::vector<std::string>& element_symbols() {
    static const std::vector<std::string> symbols = {
        "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg",
        "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr",
        "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
        "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
        "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
        "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
        "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
        "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm",
        "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
        "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};
    return symbols;
}

// IUPAC one-letter residue codes: the 20 canonical plus B, Z, X, U, O.
inline const std::string& amino_letters() {
    static const std::string letters = "ACDEFGHIKLMNPQRSTVWYBZXUO";
    return letters;
}

inline constexpr const char* kStartMol = "[START_MOL]";
inline constexpr const char* kEndMol = "[END_MOL]";
inline constexpr const char* kStartProt = "[START_PROT]";
inline constexpr const char* kEndProt = "[END_PROT]";

namespace detail {

inline std::string escape(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c <= 0x20 || c >= 0x7f) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "\\x%02x", c);
            out += buf;
        } else {
            out += static_cast<char>(c);
        }
    }
    return out;
}

inline std::string unescape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out += s[i];
            continue;
        }
        if (i + 1 < s.size() && s[i + 1] == '\\') {
            out += '\\';
            ++i;
        } else if (i + 3 < s.size() && s[i + 1] == 'x') {
            out += static_cast<char>(std::stoi(std::string(s.substr(i + 2, 2)), nullptr, 16));
            i += 3;
        } else {
            throw std::runtime_error("vocabulary file: bad escape in '" + std::string(s) + "'");
        }
    }
    return out;
}

inline std::string byte_key(unsigned char b) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "<0x%02x>", b);
    return buf;
}

}  // namespace detail

class Vocabulary {
public:
    // Builds the reserved part of the vocabulary: specials, atoms, aminos,
    // byte fallbacks. BPE merge tokens are appended by train_bpe.
    Vocabulary() {
        for (const char* s : {kStartMol, kEndMol, kStartProt, kEndProt})
            add_entry(TokenKind::Special, s, s);
        for (const auto& sym : element_symbols()) add_entry(TokenKind::Atom, sym, sym);
        for (char a : amino_letters())
            add_entry(TokenKind::Amino, std::string("<aa:") + a + ">", std::string(1, a));
        for (int b = 0; b < 256; ++b)
            add_entry(TokenKind::Byte, detail::byte_key(static_cast<unsigned char>(b)),
                      std::string(1, static_cast<char>(b)));
        reserved_count_ = entries_.size();
    }

    std::size_t size() const { return entries_.size(); }
    std::size_t reserved_count() const { return reserved_count_; }
    std::size_t merge_count() const { return merges_.size(); }

    const TokenEntry& entry(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= entries_.size())
            throw std::out_of_range("unknown token id " + std::to_string(id));
        return entries_[id];
    }

    std::optional<int> lookup(std::string_view key) const {
        auto it = token_to_id_.find(std::string(key));
        if (it == token_to_id_.end()) return std::nullopt;
        return it->second;
    }

    int byte_id(unsigned char b) const { return byte_base_ + b; }
    int special_id(std::string_view key) const {
        auto id = lookup(key);
        if (!id || entries_[*id].kind != TokenKind::Special)
            throw std::runtime_error("not a special token: " + std::string(key));
        return *id;
    }
    std::optional<int> atom_id(std::string_view symbol) const {
        auto id = lookup(symbol);
        if (id && entries_[*id].kind == TokenKind::Atom) return id;
        return std::nullopt;
    }
    std::optional<int> amino_id(char letter) const {
        return lookup(std::string("<aa:") + letter + ">");
    }

    const std::vector<std::pair<int, int>>& merges() const { return merges_; }

    int add_merge(int left, int right) {
        const auto& l = entries_[left];
        const auto& r = entries_[right];
        int id = add_entry(TokenKind::Merged, l.key + r.key, l.surface + r.surface);
        merges_.emplace_back(left, right);
        return id;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
        out << "moelens-vocab v1\n";
        out << "specials 4\n";
        for (std::size_t i = 0; i < 4; ++i) out << detail::escape(entries_[i].key) << "\n";
        out << "atoms " << element_symbols().size() << "\n";
        for (const auto& s : element_symbols()) out << s << "\n";
        out << "aminos " << amino_letters().size() << "\n";
        for (char a : amino_letters()) out << a << "\n";
        out << "bytes 256\n";
        out << "merges " << merges_.size() << "\n";
        for (auto [l, r] : merges_)
            out << detail::escape(entries_[l].key) << " " << detail::escape(entries_[r].key)
                << "\n";
        out << "tokens " << entries_.size() << "\n";
        for (std::size_t i = 0; i < entries_.size(); ++i)
            out << i << " " << detail::escape(entries_[i].key) << "\n";
        if (!out) throw std::runtime_error("write failed: " + path);
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
        std::string line;
        auto next = [&]() -> std::string {
            if (!std::getline(in, line))
                throw std::runtime_error("vocabulary file truncated: " + path);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        };
        if (next() != "moelens-vocab v1")
            throw std::runtime_error("unrecognized vocabulary file header: " + path);
        auto expect_count = [&](const char* section) -> std::size_t {
            std::istringstream ss(next());
            std::string name;
            std::size_t n = 0;
            ss >> name >> n;
            if (name != section)
                throw std::runtime_error(std::string("expected section '") + section + "' in " +
                                         path);
            return n;
        };
        Vocabulary v;
        std::size_t n_spec = expect_count("specials");
        for (std::size_t i = 0; i < n_spec; ++i) {
            if (detail::unescape(next()) != v.entries_[i].key)
                throw std::runtime_error("vocabulary file: special token mismatch");
        }
        std::size_t n_atoms = expect_count("atoms");
        for (std::size_t i = 0; i < n_atoms; ++i) next();
        std::size_t n_aminos = expect_count("aminos");
        for (std::size_t i = 0; i < n_aminos; ++i) next();
        expect_count("bytes");
        std::size_t n_merges = expect_count("merges");
        for (std::size_t i = 0; i < n_merges; ++i) {
            std::istringstream ss(next());
            std::string lkey, rkey;
            ss >> lkey >> rkey;
            auto l = v.lookup(detail::unescape(lkey));
            auto r = v.lookup(detail::unescape(rkey));
            if (!l || !r) throw std::runtime_error("vocabulary file: merge references unknown token");
            v.add_merge(*l, *r);
        }
        std::size_t n_tokens = expect_count("tokens");
        if (n_tokens != v.size())
            throw std::runtime_error("vocabulary file: token count mismatch");
        for (std::size_t i = 0; i < n_tokens; ++i) {
            std::istringstream ss(next());
            std::size_t id;
            std::string key;
            ss >> id >> key;
            if (id != i || detail::unescape(key) != v.entries_[i].key)
                throw std::runtime_error("vocabulary file: token map mismatch at id " +
                                         std::to_string(i));
        }
        return v;
    }

private:
    int add_entry(TokenKind kind, std::string key, std::string surface) {
        auto [it, inserted] = token_to_id_.emplace(key, static_cast<int>(entries_.size()));
        if (!inserted) throw std::runtime_error("duplicate token key: " + key);
        if (kind == TokenKind::Byte && byte_base_ < 0 && surface.size() == 1 &&
            static_cast<unsigned char>(surface[0]) == 0)
            byte_base_ = static_cast<int>(entries_.size());
        entries_.push_back({kind, std::move(key), std::move(surface)});
        return it->second;
    }

    std::vector<TokenEntry> entries_;
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::pair<int, int>> merges_;
    std::size_t reserved_count_ = 0;
    int byte_base_ = -1;
};

// --- entity handling -------------------------------------------------------

inline TokenSequence encode_entity(const EntitySpan& span, const Vocabulary& vocab) {
    if (span.text.empty()) throw std::invalid_argument("entity span text is empty");
    TokenSequence seq;
    if (span.kind == EntityKind::Molecule) {
        seq.ids.push_back(vocab.special_id(kStartMol));
        const std::string& t = span.text;
        std::size_t i = 0;
        while (i < t.size()) {
            // longest match against the element-symbol table, then byte
            // fallback for bonds, brackets and ring digits
            if (i + 1 < t.size()) {
                if (auto id = vocab.atom_id(t.substr(i, 2))) {
                    seq.ids.push_back(*id);
                    i += 2;
                    continue;
                }
            }
            if (auto id = vocab.atom_id(t.substr(i, 1))) {
                seq.ids.push_back(*id);
                ++i;
                continue;
            }
            unsigned char c = static_cast<unsigned char>(t[i]);
            if (c >= 0x80)
                throw std::runtime_error("molecule span: character not representable at offset " +
                                         std::to_string(i) + " (byte 0x" +
                                         [](unsigned char b) {
                                             char buf[4];
                                             std::snprintf(buf, sizeof(buf), "%02x", b);
                                             return std::string(buf);
                                         }(c) +
                                         ")");
            seq.ids.push_back(vocab.byte_id(c));
            ++i;
        }
        seq.ids.push_back(vocab.special_id(kEndMol));
    } else {
        seq.ids.push_back(vocab.special_id(kStartProt));
        for (std::size_t i = 0; i < span.text.size(); ++i) {
            auto id = vocab.amino_id(span.text[i]);
            if (!id)
                throw std::runtime_error(
                    "protein span: character not representable at offset " + std::to_string(i) +
                    " ('" + std::string(1, span.text[i]) + "')");
            seq.ids.push_back(*id);
        }
        seq.ids.push_back(vocab.special_id(kEndProt));
    }
    return seq;
}

// --- BPE -------------------------------------------------------------------

namespace detail {

struct Segment {
    bool is_entity;
    EntitySpan span;     // valid when is_entity
    std::string prose;   // valid otherwise
};

// Splits a document on inline [START_*]/[END_*] markers.
inline std::vector<Segment> split_segments(const std::string& doc) {
    std::vector<Segment> segs;
    std::size_t pos = 0;
    while (pos < doc.size()) {
        std::size_t m = doc.find(kStartMol, pos);
        std::size_t p = doc.find(kStartProt, pos);
        std::size_t s = std::min(m, p);
        if (s == std::string::npos) {
            segs.push_back({false, {}, doc.substr(pos)});
            break;
        }
        if (s > pos) segs.push_back({false, {}, doc.substr(pos, s - pos)});
        const bool is_mol = (s == m);
        const char* open = is_mol ? kStartMol : kStartProt;
        const char* close = is_mol ? kEndMol : kEndProt;
        std::size_t body = s + std::string_view(open).size();
        std::size_t e = doc.find(close, body);
        if (e == std::string::npos)
            throw std::runtime_error(std::string("unterminated entity span: missing ") + close);
        EntitySpan span;
        span.kind = is_mol ? EntityKind::Molecule : EntityKind::Protein;
        span.text = doc.substr(body, e - body);
        span.start = s;
        span.end = e + std::string_view(close).size();
        segs.push_back({true, span, {}});
        pos = span.end;
    }
    return segs;
}

inline std::vector<int> bytes_to_ids(std::string_view text, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(vocab.byte_id(c));
    return ids;
}

inline void apply_merge(std::vector<int>& seq, int left, int right, int merged) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < seq.size(); ++r) {
        if (r + 1 < seq.size() && seq[r] == left && seq[r + 1] == right) {
            seq[w++] = merged;
            ++r;
        } else {
            seq[w++] = seq[r];
        }
    }
    seq.resize(w);
}

}  // namespace detail

// Trains BPE merges over the prose portions of the corpus. Entity spans and
// all reserved tokens are untouched; merges only ever combine byte/merged
// tokens. Ties between equal-frequency pairs go to the lexicographically
// smallest pair of token keys.
inline Vocabulary train_bpe(const std::vector<std::string>& corpus, std::size_t target_size) {
    if (corpus.empty()) throw std::invalid_argument("train_bpe: corpus is empty");
    Vocabulary vocab;
    if (target_size < vocab.reserved_count())
        throw std::invalid_argument("train_bpe: target_size " + std::to_string(target_size) +
                                    " is below the reserved token count " +
                                    std::to_string(vocab.reserved_count()));
    std::vector<std::vector<int>> seqs;
    for (const auto& doc : corpus)
        for (const auto& seg : detail::split_segments(doc))
            if (!seg.is_entity && !seg.prose.empty())
                seqs.push_back(detail::bytes_to_ids(seg.prose, vocab));

    const std::size_t budget = target_size - vocab.reserved_count();
    for (std::size_t step = 0; step < budget; ++step) {
        std::map<std::pair<int, int>, std::size_t> counts;
        for (const auto& s : seqs)
            for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}]++;
        std::pair<int, int> best{-1, -1};
        std::size_t best_count = 0;
        for (const auto& [pair, count] : counts) {
            if (count < best_count) continue;
            if (count > best_count) {
                best = pair;
                best_count = count;
                continue;
            }
            auto key = [&](const std::pair<int, int>& p) {
                return std::make_pair(vocab.entry(p.first).key, vocab.entry(p.second).key);
            };
            if (key(pair) < key(best)) best = pair;
        }
        if (best_count == 0)
            throw std::runtime_error(
                "train_bpe: corpus exhausted after " + std::to_string(step) +
                " merges; achievable vocabulary size is " + std::to_string(vocab.size()));
        int merged = vocab.add_merge(best.first, best.second);
        for (auto& s : seqs) detail::apply_merge(s, best.first, best.second, merged);
    }
    return vocab;
}

// Greedy BPE over a prose string: byte tokens, then merges in training order.
inline std::vector<int> encode_prose(std::string_view text, const Vocabulary& vocab) {
    std::vector<int> ids = detail::bytes_to_ids(text, vocab);
    int merged = static_cast<int>(vocab.reserved_count());
    for (auto [l, r] : vocab.merges()) detail::apply_merge(ids, l, r, merged++);
    return ids;
}

inline TokenSequence encode(const std::string& document, const Vocabulary& vocab) {
    TokenSequence seq;
    for (const auto& seg : detail::split_segments(document)) {
        if (seg.is_entity) {
            auto ent = encode_entity(seg.span, vocab);
            seq.ids.insert(seq.ids.end(), ent.ids.begin(), ent.ids.end());
        } else {
            auto ids = encode_prose(seg.prose, vocab);
            seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
        }
    }
    return seq;
}

inline TokenSequence encode(const std::string& text, const std::vector<EntitySpan>& spans,
                            const Vocabulary& vocab) {
    TokenSequence seq;
    std::size_t pos = 0;
    for (const auto& span : spans) {
        if (span.start < pos || span.end > text.size() || span.start >= span.end)
            throw std::invalid_argument("entity spans must be ordered and non-overlapping");
        if (span.start > pos) {
            auto ids = encode_prose(std::string_view(text).substr(pos, span.start - pos), vocab);
            seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
        }
        auto ent = encode_entity(span, vocab);
        seq.ids.insert(seq.ids.end(), ent.ids.begin(), ent.ids.end());
        pos = span.end;
    }
    if (pos < text.size()) {
        auto ids = encode_prose(std::string_view(text).substr(pos), vocab);
        seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
    }
    return seq;
}

inline std::string decode(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (int id : seq.ids) out += vocab.entry(id).surface;
    return out;
}

}  // namespace moelens::tok
