#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace elastinet::index {

// Composite key: a float64 metric with the record id as tiebreak, so equal
// metric values stay distinct and deterministically ordered.
struct BKey {
    double metric = 0.0;
    std::uint32_t rid = 0;

    friend bool operator<(const BKey& a, const BKey& b) {
        if (a.metric != b.metric) return a.metric < b.metric;
        return a.rid < b.rid;
    }
    friend bool operator==(const BKey& a, const BKey& b) { return a.metric == b.metric && a.rid == b.rid; }
};

// B+ tree of order `b`: internal nodes hold at most b children, leaves at
// most b entries, every non-root node at least ceil(b/2)-1 keys. Leaves are
// chained left-to-right for range scans. Composite keys are unique.
class BPlusTree {
public:
    explicit BPlusTree(int order = 16) : order_(order) {
        if (order < 3) throw std::invalid_argument("bplustree: order must be at least 3");
        root_ = std::make_unique<Node>(true);
    }

    void insert(double metric, std::uint32_t rid) {
        BKey k{metric, rid};
        if (!std::isfinite(metric)) throw std::invalid_argument("bplustree: key must be finite");
        std::vector<std::pair<Node*, int>> path;
        Node* n = descend(k, &path);
        auto it = std::lower_bound(n->keys.begin(), n->keys.end(), k);
        if (it != n->keys.end() && *it == k) {
            throw std::invalid_argument("bplustree: duplicate (metric, rid) key");
        }
        n->keys.insert(it, k);
        ++size_;

        Node* cur = n;
        while (overflow(cur)) {
            BKey sep;
            std::unique_ptr<Node> right = split(cur, sep);
            if (path.empty()) {
                auto new_root = std::make_unique<Node>(false);
                new_root->keys.push_back(sep);
                new_root->children.push_back(std::move(root_));
                new_root->children.push_back(std::move(right));
                root_ = std::move(new_root);
                break;
            }
            auto [parent, idx] = path.back();
            path.pop_back();
            parent->keys.insert(parent->keys.begin() + idx, sep);
            parent->children.insert(parent->children.begin() + idx + 1, std::move(right));
            cur = parent;
        }
    }

    // Removes one (metric, rid) entry. Returns false (no-op) when absent.
    bool erase(double metric, std::uint32_t rid) {
        BKey k{metric, rid};
        std::vector<std::pair<Node*, int>> path;
        Node* n = descend(k, &path);
        auto it = std::lower_bound(n->keys.begin(), n->keys.end(), k);
        if (it == n->keys.end() || !(*it == k)) return false;
        n->keys.erase(it);
        --size_;

        Node* cur = n;
        while (cur != root_.get() && static_cast<int>(cur->keys.size()) < min_keys()) {
            auto [parent, idx] = path.back();
            path.pop_back();
            if (!rebalance(parent, idx)) break;  // borrowed: parent key count unchanged
            cur = parent;
        }
        while (!root_->leaf && root_->children.size() == 1) {
            root_ = std::move(root_->children[0]);
        }
        return true;
    }

    // All record ids stored at exactly this metric value, ascending by rid.
    std::vector<std::uint32_t> get(double metric) const {
        std::vector<std::uint32_t> out;
        for (const BKey& k : scan({metric, 0}, metric)) out.push_back(k.rid);
        return out;
    }

    std::vector<BKey> range_entries(double lo, double hi) const {
        if (lo > hi) throw std::invalid_argument("bplustree: range lower bound exceeds upper bound");
        return scan({lo, 0}, hi);
    }

    // Record ids with lo <= metric <= hi, in ascending key order.
    std::vector<std::uint32_t> range_query(double lo, double hi) const {
        std::vector<std::uint32_t> out;
        for (const BKey& k : range_entries(lo, hi)) out.push_back(k.rid);
        return out;
    }

    std::size_t size() const { return size_; }

    int height() const {
        int h = 1;
        const Node* n = root_.get();
        while (!n->leaf) {
            n = n->children.front().get();
            ++h;
        }
        return h;
    }

    // Nodes touched by descents since the last reset; complexity smoke checks
    // read this around a point query.
    std::uint64_t node_visits() const { return visits_; }
    void reset_node_visits() { visits_ = 0; }

    // Order-insensitive content digest (leaf walk), for inverse-op checks.
    std::uint64_t content_digest() const {
        std::uint64_t h = 1469598103934665603ULL;
        const Node* leaf = leftmost();
        for (; leaf; leaf = leaf->next) {
            for (const BKey& k : leaf->keys) {
                std::uint64_t bits;
                static_assert(sizeof(bits) == sizeof(k.metric));
                std::memcpy(&bits, &k.metric, sizeof(bits));
                h = fnv(fnv(h, bits), k.rid);
            }
        }
        return h;
    }

    // Checks every structural invariant; throws on the first violation.
    void validate() const {
        int leaf_depth = -1;
        std::vector<const Node*> leaves;
        check_node(root_.get(), 1, true, nullptr, nullptr, leaf_depth, leaves);
        const Node* chain = leftmost();
        std::size_t idx = 0, total = 0;
        for (; chain; chain = chain->next, ++idx) {
            if (idx >= leaves.size() || chain != leaves[idx]) {
                throw std::logic_error("bplustree: leaf chain does not match tree order");
            }
            total += chain->keys.size();
        }
        if (idx != leaves.size()) throw std::logic_error("bplustree: leaf chain shorter than tree");
        if (total != size_) throw std::logic_error("bplustree: size counter out of sync");
        BKey prev{-std::numeric_limits<double>::infinity(), 0};
        bool first = true;
        for (const Node* l : leaves) {
            for (const BKey& k : l->keys) {
                if (!first && !(prev < k)) throw std::logic_error("bplustree: leaf walk not strictly sorted");
                prev = k;
                first = false;
            }
        }
    }

private:
    struct Node {
        explicit Node(bool is_leaf) : leaf(is_leaf) {}
        bool leaf;
        std::vector<BKey> keys;
        std::vector<std::unique_ptr<Node>> children;  // internal: keys.size()+1
        Node* next = nullptr;                         // leaf chain
    };

    static std::uint64_t fnv(std::uint64_t h, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 1099511628211ULL;
        }
        return h;
    }

    int min_keys() const { return (order_ + 1) / 2 - 1; }

    bool overflow(const Node* n) const {
        return n->leaf ? static_cast<int>(n->keys.size()) > order_
                       : static_cast<int>(n->children.size()) > order_;
    }

    // Routing: child i holds keys in [sep_i, sep_{i+1}), sep_0 = -inf.
    Node* descend(const BKey& k, std::vector<std::pair<Node*, int>>* path) const {
        Node* n = root_.get();
        ++visits_;
        while (!n->leaf) {
            int idx = static_cast<int>(std::upper_bound(n->keys.begin(), n->keys.end(), k) - n->keys.begin());
            if (path) path->push_back({n, idx});
            n = n->children[static_cast<std::size_t>(idx)].get();
            ++visits_;
        }
        return n;
    }

    const Node* leftmost() const {
        const Node* n = root_.get();
        while (!n->leaf) n = n->children.front().get();
        return n;
    }

    std::vector<BKey> scan(const BKey& from, double hi_metric) const {
        std::vector<BKey> out;
        const Node* n = descend(from, nullptr);
        auto it = std::lower_bound(n->keys.begin(), n->keys.end(), from);
        std::size_t pos = static_cast<std::size_t>(it - n->keys.begin());
        while (n) {
            for (; pos < n->keys.size(); ++pos) {
                if (n->keys[pos].metric > hi_metric) return out;
                out.push_back(n->keys[pos]);
            }
            n = n->next;
            pos = 0;
        }
        return out;
    }

    std::unique_ptr<Node> split(Node* n, BKey& sep) {
        auto right = std::make_unique<Node>(n->leaf);
        if (n->leaf) {
            std::size_t mid = n->keys.size() / 2;
            right->keys.assign(n->keys.begin() + static_cast<std::ptrdiff_t>(mid), n->keys.end());
            n->keys.resize(mid);
            right->next = n->next;
            n->next = right.get();
            sep = right->keys.front();
        } else {
            std::size_t midk = n->keys.size() / 2;
            sep = n->keys[midk];
            right->keys.assign(n->keys.begin() + static_cast<std::ptrdiff_t>(midk) + 1, n->keys.end());
            for (std::size_t i = midk + 1; i < n->children.size(); ++i) {
                right->children.push_back(std::move(n->children[i]));
            }
            n->keys.resize(midk);
            n->children.resize(midk + 1);
        }
        return right;
    }

    // Fixes the underflowing children[idx]; returns true when two children
    // were merged (parent lost a key and may itself underflow now).
    bool rebalance(Node* parent, int idx) {
        Node* child = parent->children[static_cast<std::size_t>(idx)].get();
        Node* left = idx > 0 ? parent->children[static_cast<std::size_t>(idx - 1)].get() : nullptr;
        Node* right = idx + 1 < static_cast<int>(parent->children.size())
                          ? parent->children[static_cast<std::size_t>(idx + 1)].get()
                          : nullptr;
        if (left && static_cast<int>(left->keys.size()) > min_keys()) {
            if (child->leaf) {
                child->keys.insert(child->keys.begin(), left->keys.back());
                left->keys.pop_back();
                parent->keys[static_cast<std::size_t>(idx - 1)] = child->keys.front();
            } else {
                child->keys.insert(child->keys.begin(), parent->keys[static_cast<std::size_t>(idx - 1)]);
                parent->keys[static_cast<std::size_t>(idx - 1)] = left->keys.back();
                left->keys.pop_back();
                child->children.insert(child->children.begin(), std::move(left->children.back()));
                left->children.pop_back();
            }
            return false;
        }
        if (right && static_cast<int>(right->keys.size()) > min_keys()) {
            if (child->leaf) {
                child->keys.push_back(right->keys.front());
                right->keys.erase(right->keys.begin());
                parent->keys[static_cast<std::size_t>(idx)] = right->keys.front();
            } else {
                child->keys.push_back(parent->keys[static_cast<std::size_t>(idx)]);
                parent->keys[static_cast<std::size_t>(idx)] = right->keys.front();
                right->keys.erase(right->keys.begin());
                child->children.push_back(std::move(right->children.front()));
                right->children.erase(right->children.begin());
            }
            return false;
        }
        merge(parent, idx > 0 ? idx - 1 : idx);
        return true;
    }

    // Merges children[i+1] into children[i] and drops separator i.
    void merge(Node* parent, int i) {
        Node* left = parent->children[static_cast<std::size_t>(i)].get();
        Node* right = parent->children[static_cast<std::size_t>(i + 1)].get();
        if (left->leaf) {
            left->keys.insert(left->keys.end(), right->keys.begin(), right->keys.end());
            left->next = right->next;
        } else {
            left->keys.push_back(parent->keys[static_cast<std::size_t>(i)]);
            left->keys.insert(left->keys.end(), right->keys.begin(), right->keys.end());
            for (auto& c : right->children) left->children.push_back(std::move(c));
        }
        parent->keys.erase(parent->keys.begin() + i);
        parent->children.erase(parent->children.begin() + i + 1);
    }

    void check_node(const Node* n, int depth, bool is_root, const BKey* lo, const BKey* hi, int& leaf_depth,
                    std::vector<const Node*>& leaves) const {
        if (!is_root && static_cast<int>(n->keys.size()) < min_keys()) {
            throw std::logic_error("bplustree: non-root node below minimum occupancy");
        }
        for (std::size_t i = 1; i < n->keys.size(); ++i) {
            if (!(n->keys[i - 1] < n->keys[i])) throw std::logic_error("bplustree: node keys not strictly sorted");
        }
        for (const BKey& k : n->keys) {
            if (lo && k < *lo) throw std::logic_error("bplustree: key below routing lower bound");
            if (hi && !(k < *hi)) throw std::logic_error("bplustree: key at or above routing upper bound");
        }
        if (n->leaf) {
            if (static_cast<int>(n->keys.size()) > order_) throw std::logic_error("bplustree: leaf over capacity");
            if (!n->children.empty()) throw std::logic_error("bplustree: leaf holds children");
            if (leaf_depth == -1) leaf_depth = depth;
            if (leaf_depth != depth) throw std::logic_error("bplustree: leaves at unequal depth");
            leaves.push_back(n);
            return;
        }
        if (static_cast<int>(n->children.size()) > order_) throw std::logic_error("bplustree: fanout over order");
        if (n->children.size() != n->keys.size() + 1) {
            throw std::logic_error("bplustree: internal child count must be keys+1");
        }
        if (is_root && n->keys.empty()) throw std::logic_error("bplustree: internal root without keys");
        for (std::size_t i = 0; i < n->children.size(); ++i) {
            const BKey* clo = i == 0 ? lo : &n->keys[i - 1];
            const BKey* chi = i == n->keys.size() ? hi : &n->keys[i];
            check_node(n->children[i].get(), depth + 1, false, clo, chi, leaf_depth, leaves);
        }
    }

    int order_;
    std::unique_ptr<Node> root_;
    std::size_t size_ = 0;
    mutable std::uint64_t visits_ = 0;
};

}  // namespace elastinet::index
