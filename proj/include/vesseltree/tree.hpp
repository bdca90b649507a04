// Centerline trees: ground-truth phantoms and reconstructed vessel forests
// share this representation. Geodesic distances are arc length along the
// unique tree path, in voxel units.
#pragma once

#include <map>
#include <optional>
#include <unordered_map>

#include "vesseltree/common.hpp"

#include "json.hpp"

namespace vesseltree {

struct TreeNode {
    int id = 0;
    Vec3 pos;
    double radius = 1.0;
    std::optional<int> parent;  // absent on the root
    int label = 1;              // tree class, 1..L
};

struct CenterlineTree {
    std::vector<TreeNode> nodes;

    int label() const { return nodes.empty() ? 0 : nodes.front().label; }

    const TreeNode* find(int id) const {
        for (const auto& n : nodes)
            if (n.id == id)
                return &n;
        return nullptr;
    }
};

/// Checks the structural invariants: one root, resolvable acyclic parents,
/// uniform label, positive radii non-increasing root-to-leaf, spacing <= 1.
inline void validate_tree(const CenterlineTree& tree) {
    if (tree.nodes.empty())
        throw ValidationError("tree has no nodes");
    std::unordered_map<int, const TreeNode*> by_id;
    int roots = 0;
    for (const auto& n : tree.nodes) {
        if (!by_id.emplace(n.id, &n).second)
            throw ValidationError("duplicate node id " + std::to_string(n.id));
        if (n.radius <= 0.0)
            throw ValidationError("node " + std::to_string(n.id) + " has non-positive radius");
        if (n.label != tree.nodes.front().label)
            throw ValidationError("tree mixes labels");
        if (!n.parent)
            ++roots;
    }
    if (roots != 1)
        throw ValidationError("tree must have exactly one root, found " + std::to_string(roots));
    for (const auto& n : tree.nodes) {
        if (!n.parent)
            continue;
        auto it = by_id.find(*n.parent);
        if (it == by_id.end())
            throw ValidationError("node " + std::to_string(n.id) + " references missing parent");
        const TreeNode* p = it->second;
        if (distance(n.pos, p->pos) > 1.0 + 1e-9)
            throw ValidationError("node spacing exceeds 1 voxel at node " + std::to_string(n.id));
        if (n.radius > p->radius + 1e-9)
            throw ValidationError("radius increases from parent at node " + std::to_string(n.id));
        // Acyclicity: walk to the root with a step bound.
        const TreeNode* cur = &n;
        std::size_t steps = 0;
        while (cur->parent) {
            cur = by_id.at(*cur->parent);
            if (++steps > tree.nodes.size())
                throw ValidationError("parent links contain a cycle");
        }
    }
}

// ---------------------------------------------------------------------------
// Geodesic distances. Precomputes cumulative root arc length per node,
// then D(a,b) = cum(a) + cum(b) - 2*cum(lca).

class TreeGeodesics {
public:
    explicit TreeGeodesics(const CenterlineTree& tree) {
        for (std::size_t i = 0; i < tree.nodes.size(); ++i)
            index_[tree.nodes[i].id] = i;
        parent_.assign(tree.nodes.size(), -1);
        depth_.assign(tree.nodes.size(), 0);
        cum_.assign(tree.nodes.size(), 0.0);
        // Nodes may appear in any order; resolve iteratively from roots.
        std::vector<std::size_t> order;
        order.reserve(tree.nodes.size());
        std::vector<char> done(tree.nodes.size(), 0);
        for (std::size_t i = 0; i < tree.nodes.size(); ++i)
            if (!tree.nodes[i].parent) {
                done[i] = 1;
                order.push_back(i);
            }
        for (std::size_t head = 0; head < order.size(); ++head) {
            for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
                if (done[i] || !tree.nodes[i].parent)
                    continue;
                const auto pit = index_.find(*tree.nodes[i].parent);
                if (pit == index_.end())
                    throw ValidationError("geodesics: missing parent node");
                const std::size_t p = pit->second;
                if (!done[p])
                    continue;
                parent_[i] = static_cast<long>(p);
                depth_[i] = depth_[p] + 1;
                cum_[i] = cum_[p] + distance(tree.nodes[i].pos, tree.nodes[p].pos);
                done[i] = 1;
                order.push_back(i);
            }
        }
        if (order.size() != tree.nodes.size())
            throw ValidationError("geodesics: disconnected or cyclic tree");
    }

    bool has(int id) const { return index_.count(id) > 0; }

    double between_ids(int a, int b) const {
        const auto ia = index_.find(a);
        const auto ib = index_.find(b);
        if (ia == index_.end() || ib == index_.end())
            throw ValidationError("no tree path");
        return between(ia->second, ib->second);
    }

    double between(std::size_t a, std::size_t b) const {
        std::size_t u = a, v = b;
        while (depth_[u] > depth_[v])
            u = static_cast<std::size_t>(parent_[u]);
        while (depth_[v] > depth_[u])
            v = static_cast<std::size_t>(parent_[v]);
        while (u != v) {
            u = static_cast<std::size_t>(parent_[u]);
            v = static_cast<std::size_t>(parent_[v]);
        }
        return cum_[a] + cum_[b] - 2.0 * cum_[u];
    }

    std::size_t index_of(int id) const { return index_.at(id); }

private:
    std::unordered_map<int, std::size_t> index_;
    std::vector<long> parent_;
    std::vector<int> depth_;
    std::vector<double> cum_;
};

/// Arc length along the unique tree path for each requested id pair.
/// Ids not present in this tree raise "no tree path".
inline std::vector<double> tree_geodesic_matrix(const CenterlineTree& tree,
                                                const std::vector<std::pair<int, int>>& pairs) {
    TreeGeodesics geo(tree);
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& [a, b] : pairs)
        out.push_back(geo.between_ids(a, b));
    return out;
}

// ---------------------------------------------------------------------------
// Forest JSON: {"nodes":[{id,pos,radius,parent,label}]}. One file can hold
// several trees; ids are unique file-wide and labels partition the nodes.

inline nlohmann::json forest_to_json(const std::vector<CenterlineTree>& trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& tree : trees)
        for (const auto& n : tree.nodes) {
            nlohmann::json jn;
            jn["id"] = n.id;
            jn["pos"] = {n.pos.x, n.pos.y, n.pos.z};
            jn["radius"] = n.radius;
            if (n.parent)
                jn["parent"] = *n.parent;
            else
                jn["parent"] = nullptr;
            jn["label"] = n.label;
            nodes.push_back(std::move(jn));
        }
    return nlohmann::json{{"nodes", std::move(nodes)}};
}

inline std::vector<CenterlineTree> forest_from_json(const nlohmann::json& j,
                                                    const std::string& context) {
    std::map<int, CenterlineTree> by_label;
    std::unordered_map<int, int> seen_ids;
    try {
        for (const auto& jn : j.at("nodes")) {
            TreeNode n;
            n.id = jn.at("id").get<int>();
            const auto& pos = jn.at("pos");
            n.pos = Vec3{pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>()};
            n.radius = jn.at("radius").get<double>();
            if (!jn.at("parent").is_null())
                n.parent = jn.at("parent").get<int>();
            n.label = jn.at("label").get<int>();
            if (!seen_ids.emplace(n.id, n.label).second)
                throw ValidationError("duplicate node id " + std::to_string(n.id) + " in " +
                                      context);
            by_label[n.label].nodes.push_back(n);
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed tree file " + context + ": " + e.what());
    }
    std::vector<CenterlineTree> trees;
    trees.reserve(by_label.size());
    for (auto& [label, tree] : by_label)
        trees.push_back(std::move(tree));
    return trees;
}

inline void save_forest(const std::vector<CenterlineTree>& trees,
                        const std::filesystem::path& path) {
    write_text_file(path, forest_to_json(trees).dump(2) + "\n");
}

inline std::vector<CenterlineTree> load_forest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed tree file " + path.string() + ": " + e.what());
    }
    return forest_from_json(j, path.string());
}

}  // namespace vesseltree
