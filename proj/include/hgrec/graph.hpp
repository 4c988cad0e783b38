#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hgrec/errors.hpp"

namespace hgrec {

enum class NodeType : std::uint8_t { User = 0, Recipe = 1, Ingredient = 2 };
inline constexpr std::size_t kNumNodeTypes = 3;

enum class RelationType : std::uint8_t {
  UserRecipe = 0,
  RecipeRecipe = 1,
  RecipeIngredient = 2,
  IngredientIngredient = 3,
};
inline constexpr std::size_t kNumRelations = 4;

const char* node_type_name(NodeType t);
NodeType node_type_from_string(std::string_view s);
const char* relation_name(RelationType r);
RelationType relation_from_string(std::string_view s);

// Endpoint types. Symmetric relations (recipe-recipe, ingredient-ingredient)
// have src == dst and store each undirected edge as one canonical record
// (src <= dst); adjacency materializes both orientations.
NodeType relation_src_type(RelationType r);
NodeType relation_dst_type(RelationType r);
bool relation_symmetric(RelationType r);

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  double weight = 0.0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<double> values;  // row-major, row i = node i
  bool empty() const { return values.empty(); }
};

struct Neighbor {
  std::uint32_t id;
  double weight;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// CSR adjacency for one (node type, relation) incidence.
struct Adjacency {
  std::vector<std::size_t> offsets;  // node_count + 1
  std::vector<std::uint32_t> nbr;    // neighbor ids, ascending per node
  std::vector<double> weight;

  std::size_t degree(std::uint32_t id) const {
    return offsets[id + 1] - offsets[id];
  }
};

// Flattened edge arrays for one aggregation direction, grouped by the
// aggregating node (ascending), neighbors ascending within a group.
struct DirectionEdges {
  std::vector<std::uint32_t> agg;  // aggregating node per edge (segment ids)
  std::vector<std::uint32_t> nbr;  // neighbor per edge
  std::vector<double> weight;
  std::size_t n_agg_nodes = 0;
  std::size_t size() const { return agg.size(); }
};

class HeteroGraph {
 public:
  std::array<std::size_t, kNumNodeTypes> node_counts{};
  std::array<std::vector<Edge>, kNumRelations> edges;  // canonical records
  std::array<FeatureMatrix, kNumNodeTypes> features;
  // Raw record counts from the source files (symmetric relations may list an
  // undirected edge in both orientations; canonical storage dedupes them).
  std::array<std::size_t, kNumRelations> record_counts{};

  std::size_t node_count(NodeType t) const {
    return node_counts[static_cast<std::size_t>(t)];
  }
  std::size_t edge_count(RelationType r) const {
    return edges[static_cast<std::size_t>(r)].size();
  }
  const FeatureMatrix& feature(NodeType t) const {
    return features[static_cast<std::size_t>(t)];
  }

  // Checks endpoint bounds, canonical ordering, and feature row counts;
  // builds adjacency. Must be called after any direct edit of the members.
  void finalize();

  // Complete duplicate-free neighbor list under r, ascending id. Throws
  // ContractError if r is not incident to t or the id is out of range.
  std::vector<Neighbor> neighbors(NodeType t, std::uint32_t id,
                                  RelationType r) const;
  const Adjacency& adjacency(NodeType t, RelationType r) const;
  DirectionEdges direction_edges(NodeType agg_type, RelationType r) const;

  // Copy with the user-recipe relation replaced (used to hold out test edges).
  HeteroGraph with_user_recipe_edges(std::vector<Edge> ur_edges) const;

 private:
  // adjacency_[relation][side]: side 0 aggregates at the src type, side 1 at
  // the dst type; symmetric relations use side 0 only.
  std::array<std::array<Adjacency, 2>, kNumRelations> adjacency_;
  bool finalized_ = false;
};

// Stochastic subgraph: independent node dropout then edge dropout, seeded.
// Kept edges never reference a dropped node.
class GraphView {
 public:
  static GraphView full(const HeteroGraph& g);
  static GraphView augment(const HeteroGraph& g, double node_drop,
                           double edge_drop, std::uint64_t seed);

  const HeteroGraph& base() const { return *base_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<std::uint8_t>& node_mask(NodeType t) const {
    return node_mask_[static_cast<std::size_t>(t)];
  }
  // Raw Bernoulli edge mask over canonical records, before node-induced removal.
  const std::vector<std::uint8_t>& edge_mask(RelationType r) const {
    return edge_mask_[static_cast<std::size_t>(r)];
  }
  bool node_kept(NodeType t, std::uint32_t id) const {
    return node_mask_[static_cast<std::size_t>(t)][id] != 0;
  }

  // Edges surviving both masks, as canonical records.
  const std::vector<Edge>& kept_edges(RelationType r) const {
    return kept_edges_[static_cast<std::size_t>(r)];
  }

  std::vector<Neighbor> neighbors(NodeType t, std::uint32_t id,
                                  RelationType r) const;
  const Adjacency& adjacency(NodeType t, RelationType r) const;
  DirectionEdges direction_edges(NodeType agg_type, RelationType r) const;

 private:
  const HeteroGraph* base_ = nullptr;
  std::uint64_t seed_ = 0;
  std::array<std::vector<std::uint8_t>, kNumNodeTypes> node_mask_;
  std::array<std::vector<std::uint8_t>, kNumRelations> edge_mask_;
  std::array<std::vector<Edge>, kNumRelations> kept_edges_;
  std::array<std::array<Adjacency, 2>, kNumRelations> adjacency_;

  void rebuild();
};

struct GraphFiles {
  std::vector<std::filesystem::path> node_files;
  std::vector<std::filesystem::path> edge_files;
  std::map<NodeType, std::filesystem::path> feature_files;
};

HeteroGraph load_graph(const GraphFiles& files);
// Convenience layout: nodes.csv, edges.csv, features_user.csv,
// features_recipe.csv, features_ingredient.csv (feature files optional).
HeteroGraph load_graph_dir(const std::filesystem::path& dir);
void save_graph_dir(const HeteroGraph& g, const std::filesystem::path& dir);

}  // namespace hgrec
