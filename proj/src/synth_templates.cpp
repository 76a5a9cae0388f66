#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "awm/errors.hpp"
#include "awm/synth.hpp"

namespace awm {

namespace {

struct Artifacts {
    Json tasks = Json::array();
    std::string schema;
    SeedSpec seed;
    Json tools = Json::array();          // full definitions
    Json verification = Json::object();  // task id -> {spec, golden}
};

using Rng = std::mt19937_64;

Rng rng_for(const std::string& scenario) {
    return Rng(std::stoull(sha256_hex(scenario).substr(0, 16), nullptr, 16));
}

template <typename T>
std::vector<T> pick(Rng& rng, std::vector<T> pool, std::size_t n) {
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng() % i]);
    pool.resize(std::min(n, pool.size()));
    return pool;
}

int uniform(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); }

std::string q(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += '\'';
        out += c;
    }
    return out + "'";
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string first_name(const std::string& full) { return full.substr(0, full.find(' ')); }

// tool definition helpers

Json param(const std::string& name, const std::string& type, bool required, const std::string& description,
           Json example, Json default_value = nullptr) {
    Json p{{"name", name}, {"type", type}, {"required", required}, {"description", description}, {"example", example}};
    if (!default_value.is_null()) p["default"] = default_value;
    return p;
}

Json stmt(const std::string& id, const std::string& sql, const std::string& require = {},
          const std::string& error = {}) {
    Json s{{"id", id}, {"sql", sql}};
    if (!require.empty()) {
        s["require"] = require;
        s["error"] = error;
    }
    return s;
}

// columns as "name:type name:type"
Json field(const std::string& name, const std::string& statement, const std::string& shape, const std::string& columns) {
    Json cols = Json::array();
    std::istringstream in(columns);
    std::string c;
    while (in >> c) {
        const auto colon = c.find(':');
        cols.push_back({{"column", c.substr(0, colon)}, {"type", c.substr(colon + 1)}});
    }
    return {{"name", name}, {"statement", statement}, {"shape", shape}, {"columns", cols}};
}

Json tool(const std::string& name, const std::string& summary, const std::string& description,
          std::vector<std::string> tags, bool mutating, Json params, Json plan, Json response) {
    return {{"name", name},       {"summary", summary}, {"description", description},
            {"tags", tags},       {"mutating", mutating}, {"params", params},
            {"plan", plan},       {"response", response}};
}

// verification helpers

class SpecBuilder {
public:
    void probe(const std::string& name, const std::string& target, const std::string& query) {
        probes_.push_back({{"name", name}, {"target", target}, {"query", query}, {"projection", Json::array()}});
    }
    /// Exactly one new row matching `query` (keyed by `key`).
    void created(const std::string& name, const std::string& query, const std::string& key) {
        probe(name + "_before", "initial", query);
        probe(name + "_after", "final", query);
        signals_.push_back({{"name", name}, {"rule", "set_difference"}, {"left", name + "_after"},
                            {"right", name + "_before"}, {"key", {key}},
                            {"expect", {{"op", "count"}, {"value", 1}}}, {"required", true}});
    }
    void equals(const std::string& name, const std::string& query, Json value, bool guard = false) {
        probe(name + "_final", "final", query);
        signals_.push_back({{"name", name}, {"rule", "scalar_equals"}, {"left", name + "_final"}, {"value", value},
                            {"expect", {{"op", "eq"}, {"value", true}}}, {guard ? "guard" : "required", true}});
    }
    /// Guard: rows matching `query` are identical before and after.
    void unchanged(const std::string& name, const std::string& query) {
        probe(name + "_before", "initial", query);
        probe(name + "_after", "final", query);
        signals_.push_back({{"name", name + "_added"}, {"rule", "set_difference"}, {"left", name + "_after"},
                            {"right", name + "_before"}, {"expect", {{"op", "empty"}}}, {"guard", true}});
        signals_.push_back({{"name", name + "_removed"}, {"rule", "set_difference"}, {"left", name + "_before"},
                            {"right", name + "_after"}, {"expect", {{"op", "empty"}}}, {"guard", true}});
    }
    Json build(const std::string& task, const std::string& success, const std::string& failure) const {
        return {{"id", "v-" + task}, {"probes", probes_}, {"signals", signals_},
                {"success_criteria", success}, {"failure_criteria", failure}};
    }

private:
    Json probes_ = Json::array();
    Json signals_ = Json::array();
};

struct Call {
    std::string tool;
    Json arguments;
};

void add_task(Artifacts& a, const std::string& id, const std::string& instruction, const SpecBuilder& spec,
              const std::string& success, const std::string& failure, const std::vector<Call>& calls,
              const std::string& answer) {
    a.tasks.push_back({{"id", id}, {"instruction", instruction}});
    Json c = Json::array();
    for (const auto& call : calls) c.push_back({{"tool", call.tool}, {"arguments", call.arguments}});
    a.verification[id] = {{"spec", spec.build(id, success, failure)}, {"golden", {{"calls", c}, {"answer", answer}}}};
}

void seed_table(Artifacts& a, const std::string& table, const std::string& rationale, std::vector<std::string> rows) {
    a.seed.tables.push_back({table, rationale, std::move(rows)});
}

const std::vector<std::string> kPeople = {
    "Ada Byron",       "Grace Hopper",  "Alan Turing",     "Katherine Johnson", "Edsger Dijkstra", "Barbara Liskov",
    "Donald Knuth",    "Frances Allen", "John Backus",     "Radia Perlman",     "Ken Thompson",    "Margaret Hamilton",
    "Tony Hoare",      "Hedy Lamarr",   "Claude Shannon",  "Sophie Wilson",     "Niklaus Wirth",   "Annie Easley",
    "Leslie Lamport",  "Mary Keller"};

const std::vector<std::string> kStreets = {"12 Harbour Road", "48 Elm Street",   "7 Mill Lane",    "230 Station Avenue",
                                           "19 Orchard Close", "5 Quarry Hill",  "88 Canal Walk",  "61 Beacon Street"};
const std::vector<std::string> kCities = {"Portsmouth", "Leeds", "Galway", "Utrecht", "Bergen", "Tampere", "Ghent", "Porto"};

// Commerce: catalogue, cart, checkout, orders, addresses, wishlist, reviews.

Artifacts commerce(Rng& rng) {
    Artifacts a;
    a.schema = R"(CREATE TABLE customers (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  email TEXT NOT NULL UNIQUE,
  phone TEXT
);

CREATE TABLE products (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  category TEXT NOT NULL,
  price_cents INTEGER NOT NULL CHECK (price_cents >= 0),
  stock INTEGER NOT NULL CHECK (stock >= 0)
);
CREATE INDEX idx_products_category ON products (category);

CREATE TABLE addresses (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  customer_id INTEGER NOT NULL REFERENCES customers (id),
  label TEXT NOT NULL,
  street TEXT NOT NULL,
  city TEXT NOT NULL,
  is_default INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE orders (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  customer_id INTEGER NOT NULL REFERENCES customers (id),
  address_id INTEGER REFERENCES addresses (id),
  status TEXT NOT NULL,
  total_cents INTEGER NOT NULL,
  placed_at TEXT NOT NULL
);
CREATE INDEX idx_orders_customer ON orders (customer_id);

CREATE TABLE order_items (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  order_id INTEGER NOT NULL REFERENCES orders (id),
  product_id INTEGER NOT NULL REFERENCES products (id),
  quantity INTEGER NOT NULL CHECK (quantity > 0),
  unit_price_cents INTEGER NOT NULL
);

CREATE TABLE cart_items (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  customer_id INTEGER NOT NULL REFERENCES customers (id),
  product_id INTEGER NOT NULL REFERENCES products (id),
  quantity INTEGER NOT NULL CHECK (quantity > 0),
  UNIQUE (customer_id, product_id)
);

CREATE TABLE wishlist (
  customer_id INTEGER NOT NULL REFERENCES customers (id),
  product_id INTEGER NOT NULL REFERENCES products (id),
  added_at TEXT NOT NULL,
  PRIMARY KEY (customer_id, product_id)
);

CREATE TABLE reviews (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  customer_id INTEGER NOT NULL REFERENCES customers (id),
  product_id INTEGER NOT NULL REFERENCES products (id),
  rating INTEGER NOT NULL CHECK (rating BETWEEN 1 AND 5),
  body TEXT NOT NULL,
  created_at TEXT NOT NULL
);
)";

    const std::string cu = ":current_user_id";
    const std::string product_cols = "id:integer name:text category:text price_cents:integer stock:integer";
    const std::string address_cols = "address_id:integer label:text street:text city:text is_default:boolean";
    const std::string address_sql =
        "SELECT id AS address_id, label, street, city, is_default FROM addresses WHERE customer_id = " + cu + " ORDER BY id";
    auto& t = a.tools;
    t.push_back(tool("search_products", "Search the catalogue by name or category",
                     "Returns products ordered by id. Filters are optional and combined with AND.", {"catalogue"}, false,
                     {param("query", "text", false, "Substring of the product name", "Lamp"),
                      param("category", "text", false, "Exact category", "kitchen"),
                      param("limit", "integer", false, "Maximum number of products", 5, 20)},
                     {stmt("products", "SELECT id, name, category, price_cents, stock FROM products WHERE (:category IS NULL OR "
                                       "category = :category) AND (:query IS NULL OR name LIKE '%' || :query || '%') "
                                       "ORDER BY id LIMIT :limit")},
                     {field("products", "products", "rows", product_cols)}));
    t.push_back(tool("get_product", "Fetch one product by id", "Returns price in cents and units in stock.", {"catalogue"}, false,
                     {param("product_id", "integer", true, "Product id", 3)},
                     {stmt("product", "SELECT id, name, category, price_cents, stock FROM products WHERE id = :product_id",
                           "nonempty", "product not found")},
                     {field("product", "product", "row", product_cols)}));
    t.push_back(tool("view_cart", "List the items in the current customer's cart", "Each line carries its subtotal in cents.",
                     {"cart"}, false, Json::array(),
                     {stmt("items", "SELECT c.product_id, p.name, c.quantity, p.price_cents, c.quantity * p.price_cents AS "
                                    "line_cents FROM cart_items c JOIN products p ON p.id = c.product_id WHERE c.customer_id = " +
                                        cu + " ORDER BY c.id")},
                     {field("items", "items", "rows",
                            "product_id:integer name:text quantity:integer price_cents:integer line_cents:integer")}));
    t.push_back(tool("add_to_cart", "Add units of a product to the cart",
                     "Adds to the existing quantity when the product is already in the cart.", {"cart"}, true,
                     {param("product_id", "integer", true, "Product to add", 3),
                      param("quantity", "integer", false, "Units to add", 2, 1)},
                     {stmt("check", "SELECT stock >= :quantity AND :quantity > 0 FROM products WHERE id = :product_id", "truthy",
                           "product unavailable in that quantity"),
                      stmt("upsert", "INSERT INTO cart_items (customer_id, product_id, quantity) VALUES (" + cu +
                                         ", :product_id, :quantity) ON CONFLICT (customer_id, product_id) DO UPDATE SET "
                                         "quantity = quantity + excluded.quantity"),
                      stmt("item", "SELECT product_id, quantity FROM cart_items WHERE customer_id = " + cu +
                                       " AND product_id = :product_id")},
                     {field("item", "item", "row", "product_id:integer quantity:integer")}));
    t.push_back(tool("update_cart_item", "Set the quantity of a product already in the cart", "Quantity must be positive.",
                     {"cart"}, true,
                     {param("product_id", "integer", true, "Product in the cart", 2),
                      param("quantity", "integer", true, "New quantity", 4)},
                     {stmt("update", "UPDATE cart_items SET quantity = :quantity WHERE customer_id = " + cu +
                                         " AND product_id = :product_id", "nonempty", "product is not in the cart"),
                      stmt("item", "SELECT product_id, quantity FROM cart_items WHERE customer_id = " + cu +
                                       " AND product_id = :product_id")},
                     {field("item", "item", "row", "product_id:integer quantity:integer")}));
    t.push_back(tool("remove_from_cart", "Remove a product from the cart", "Deletes the whole cart line.", {"cart"}, true,
                     {param("product_id", "integer", true, "Product to remove", 1)},
                     {stmt("delete", "DELETE FROM cart_items WHERE customer_id = " + cu + " AND product_id = :product_id",
                           "nonempty", "product is not in the cart")},
                     {field("removed", "delete", "affected", "")}));
    const std::string cart_join = "FROM cart_items c JOIN products p ON p.id = c.product_id WHERE c.customer_id = " + cu;
    const std::string chosen_address =
        "COALESCE(:address_id, (SELECT id FROM addresses WHERE customer_id = " + cu + " AND is_default = 1))";
    t.push_back(tool("checkout", "Place an order for everything in the cart",
                     "Ships to the given address or the default one, takes stock and empties the cart.", {"orders"}, true,
                     {param("address_id", "integer", false, "Shipping address; default address when omitted", 2)},
                     {stmt("nonempty", "SELECT 1 FROM cart_items WHERE customer_id = " + cu, "nonempty", "cart is empty"),
                      stmt("stock", "SELECT COUNT(*) = 0 " + cart_join + " AND c.quantity > p.stock", "truthy",
                           "not enough stock"),
                      stmt("address", "SELECT COUNT(*) FROM addresses WHERE customer_id = " + cu + " AND id = " + chosen_address,
                           "truthy", "no such address"),
                      stmt("order", "INSERT INTO orders (customer_id, address_id, status, total_cents, placed_at) SELECT " + cu +
                                        ", " + chosen_address + ", 'placed', SUM(c.quantity * p.price_cents), :now " + cart_join),
                      stmt("items", "INSERT INTO order_items (order_id, product_id, quantity, unit_price_cents) SELECT (SELECT "
                                        "MAX(id) FROM orders WHERE customer_id = " + cu + "), c.product_id, c.quantity, "
                                        "p.price_cents " + cart_join),
                      stmt("take", "UPDATE products SET stock = stock - (SELECT quantity FROM cart_items WHERE customer_id = " +
                                       cu + " AND product_id = products.id) WHERE id IN (SELECT product_id FROM cart_items "
                                       "WHERE customer_id = " + cu + ")"),
                      stmt("clear", "DELETE FROM cart_items WHERE customer_id = " + cu),
                      stmt("placed", "SELECT id AS order_id, address_id, status, total_cents FROM orders WHERE id = (SELECT "
                                         "MAX(id) FROM orders WHERE customer_id = " + cu + ")")},
                     {field("order", "placed", "row", "order_id:integer address_id:integer status:text total_cents:integer")}));
    t.push_back(tool("list_orders", "List the current customer's orders", "Optionally filtered by status: placed, shipped, cancelled.",
                     {"orders"}, false, {param("status", "text", false, "Order status", "placed")},
                     {stmt("orders", "SELECT o.id AS order_id, o.status, o.total_cents, o.placed_at, (SELECT group_concat(p.name, "
                                     "', ') FROM order_items i JOIN products p ON p.id = i.product_id WHERE i.order_id = o.id) "
                                     "AS products FROM orders o WHERE o.customer_id = " + cu +
                                         " AND (:status IS NULL OR o.status = :status) ORDER BY o.id")},
                     {field("orders", "orders", "rows",
                            "order_id:integer status:text total_cents:integer placed_at:text products:text")}));
    t.push_back(tool("cancel_order", "Cancel an order that has not shipped", "Returns the items to stock.", {"orders"}, true,
                     {param("order_id", "integer", true, "Order to cancel", 2)},
                     {stmt("cancel", "UPDATE orders SET status = 'cancelled' WHERE id = :order_id AND customer_id = " + cu +
                                         " AND status = 'placed'", "nonempty", "only placed orders can be cancelled"),
                      stmt("restock", "UPDATE products SET stock = stock + (SELECT SUM(quantity) FROM order_items WHERE "
                                      "order_id = :order_id AND product_id = products.id) WHERE id IN (SELECT product_id FROM "
                                      "order_items WHERE order_id = :order_id)"),
                      stmt("order", "SELECT id AS order_id, status FROM orders WHERE id = :order_id")},
                     {field("order", "order", "row", "order_id:integer status:text")}));
    t.push_back(tool("list_addresses", "List the current customer's shipping addresses", "Exactly one address is the default.",
                     {"addresses"}, false, Json::array(), {stmt("addresses", address_sql)},
                     {field("addresses", "addresses", "rows", address_cols)}));
    t.push_back(tool("add_address", "Add a shipping address", "Optionally makes the new address the default.", {"addresses"}, true,
                     {param("label", "text", true, "Short name such as Home", "Cabin"),
                      param("street", "text", true, "Street and number", "4 Pine Road"),
                      param("city", "text", true, "City", "Bergen"),
                      param("make_default", "boolean", false, "Make this the default address", true, false)},
                     {stmt("clear", "UPDATE addresses SET is_default = 0 WHERE customer_id = " + cu + " AND :make_default"),
                      stmt("insert", "INSERT INTO addresses (customer_id, label, street, city, is_default) VALUES (" + cu +
                                         ", :label, :street, :city, CASE WHEN :make_default THEN 1 ELSE 0 END)"),
                      stmt("address", "SELECT id AS address_id, label, street, city, is_default FROM addresses WHERE id = "
                                      "last_insert_rowid()")},
                     {field("address", "address", "row", address_cols)}));
    t.push_back(tool("set_default_address", "Choose the default shipping address", "Clears the flag on every other address.",
                     {"addresses"}, true, {param("address_id", "integer", true, "Address to make default", 2)},
                     {stmt("check", "SELECT COUNT(*) FROM addresses WHERE id = :address_id AND customer_id = " + cu, "truthy",
                           "no such address"),
                      stmt("update", "UPDATE addresses SET is_default = CASE WHEN id = :address_id THEN 1 ELSE 0 END WHERE "
                                     "customer_id = " + cu),
                      stmt("addresses", address_sql)},
                     {field("addresses", "addresses", "rows", address_cols)}));
    t.push_back(tool("add_to_wishlist", "Save a product to the wishlist", "Products can be saved once.", {"wishlist"}, true,
                     {param("product_id", "integer", true, "Product to save", 5)},
                     {stmt("insert", "INSERT INTO wishlist (customer_id, product_id, added_at) VALUES (" + cu +
                                         ", :product_id, :now)"),
                      stmt("wishlist", "SELECT w.product_id, p.name, w.added_at FROM wishlist w JOIN products p ON p.id = "
                                       "w.product_id WHERE w.customer_id = " + cu + " ORDER BY w.added_at, w.product_id")},
                     {field("wishlist", "wishlist", "rows", "product_id:integer name:text added_at:text")}));
    t.push_back(tool("write_review", "Review a product", "Rating from 1 to 5 with a short text.", {"reviews"}, true,
                     {param("product_id", "integer", true, "Reviewed product", 6),
                      param("rating", "integer", true, "Stars from 1 to 5", 4),
                      param("body", "text", true, "Review text", "Works as described")},
                     {stmt("insert", "INSERT INTO reviews (customer_id, product_id, rating, body, created_at) VALUES (" + cu +
                                         ", :product_id, :rating, :body, :now)"),
                      stmt("review", "SELECT id AS review_id, product_id, rating, body FROM reviews WHERE id = "
                                     "last_insert_rowid()")},
                     {field("review", "review", "row", "review_id:integer product_id:integer rating:integer body:text")}));
    t.push_back(tool("update_contact", "Change the current customer's email or phone",
                     "Omitted fields keep their value. Emails are unique.", {"profile"}, true,
                     {param("email", "text", false, "New email address", "new@example.com"),
                      param("phone", "text", false, "New phone number", "+44 20 7946 0000")},
                     {stmt("update", "UPDATE customers SET email = COALESCE(:email, email), phone = COALESCE(:phone, phone) "
                                     "WHERE id = " + cu, "nonempty", "customer not found"),
                      stmt("customer", "SELECT id, name, email, phone FROM customers WHERE id = " + cu)},
                     {field("customer", "customer", "row", "id:integer name:text email:text phone:text")}));

    // data
    const std::vector<std::string> products = {
        "Walnut Desk Lamp",     "Linen Throw Blanket", "Ceramic Pour Over Set", "Cast Iron Skillet",  "Bamboo Cutting Board",
        "Wool Running Socks",   "Canvas Tote Bag",     "Steel Water Bottle",    "Oak Bookshelf",      "Cotton Bath Towel",
        "Leather Card Wallet",  "Glass Storage Jars",  "Copper Kettle",         "Rattan Laundry Basket", "Merino Beanie",
        "Stoneware Mug Pair",   "Folding Camp Chair",  "Silk Sleep Mask",       "Espresso Tamper",    "Brass Candle Holder",
        "Herb Planter Box",     "Denim Apron",         "Porcelain Teapot",      "Travel Spice Kit"};
    const std::vector<std::string> categories = {"home", "kitchen", "apparel", "outdoor"};
    const auto names = pick(rng, products, 12);
    std::vector<int> price(13), stock(13);
    std::vector<std::string> rows;
    for (int i = 1; i <= 12; ++i) {
        price[i] = uniform(rng, 5, 94) * 100 + 99;
        stock[i] = uniform(rng, 5, 25);
        rows.push_back("INSERT INTO products (id, name, category, price_cents, stock) VALUES (" + std::to_string(i) + ", " +
                       q(names[i - 1]) + ", " + q(categories[rng() % categories.size()]) + ", " + std::to_string(price[i]) +
                       ", " + std::to_string(stock[i]) + ");");
    }
    const auto people = pick(rng, kPeople, 4);
    std::vector<std::string> customers;
    for (int i = 1; i <= 4; ++i)
        customers.push_back("INSERT INTO customers (id, name, email, phone) VALUES (" + std::to_string(i) + ", " +
                            q(people[i - 1]) + ", " + q(lower(first_name(people[i - 1])) + "@example.com") + ", " +
                            q("+44 20 7946 0" + std::to_string(100 + i)) + ");");
    seed_table(a, "customers", "Four customers; customer 1 is the acting user.", customers);
    seed_table(a, "products", "Twelve products with prices in cents and units in stock.", rows);
    const auto streets = pick(rng, kStreets, 4);
    const auto cities = pick(rng, kCities, 4);
    seed_table(a, "addresses", "Customer 1 has a default Home and a Work address.",
               {"INSERT INTO addresses (id, customer_id, label, street, city, is_default) VALUES (1, 1, 'Home', " +
                    q(streets[0]) + ", " + q(cities[0]) + ", 1);",
                "INSERT INTO addresses (id, customer_id, label, street, city, is_default) VALUES (2, 1, 'Work', " +
                    q(streets[1]) + ", " + q(cities[1]) + ", 0);",
                "INSERT INTO addresses (id, customer_id, label, street, city, is_default) VALUES (3, 2, 'Home', " +
                    q(streets[2]) + ", " + q(cities[2]) + ", 1);"});
    seed_table(a, "orders", "Customer 1 has one shipped and one placed order; customer 2 has a placed order.",
               {"INSERT INTO orders (id, customer_id, address_id, status, total_cents, placed_at) VALUES (1, 1, 1, 'shipped', " +
                    std::to_string(price[6]) + ", '2024-12-10 10:00:00');",
                "INSERT INTO orders (id, customer_id, address_id, status, total_cents, placed_at) VALUES (2, 1, 1, 'placed', " +
                    std::to_string(2 * price[7]) + ", '2024-12-28 15:30:00');",
                "INSERT INTO orders (id, customer_id, address_id, status, total_cents, placed_at) VALUES (3, 2, 3, 'placed', " +
                    std::to_string(price[9]) + ", '2024-12-29 08:45:00');"});
    seed_table(a, "order_items", "One line per order.",
               {"INSERT INTO order_items (id, order_id, product_id, quantity, unit_price_cents) VALUES (1, 1, 6, 1, " +
                    std::to_string(price[6]) + ");",
                "INSERT INTO order_items (id, order_id, product_id, quantity, unit_price_cents) VALUES (2, 2, 7, 2, " +
                    std::to_string(price[7]) + ");",
                "INSERT INTO order_items (id, order_id, product_id, quantity, unit_price_cents) VALUES (3, 3, 9, 1, " +
                    std::to_string(price[9]) + ");"});
    seed_table(a, "cart_items", "Customer 1 has two products in the cart; customer 2 has one.",
               {"INSERT INTO cart_items (id, customer_id, product_id, quantity) VALUES (1, 1, 1, 1);",
                "INSERT INTO cart_items (id, customer_id, product_id, quantity) VALUES (2, 1, 2, 2);",
                "INSERT INTO cart_items (id, customer_id, product_id, quantity) VALUES (3, 2, 8, 1);"});
    seed_table(a, "wishlist", "One saved product per customer.",
               {"INSERT INTO wishlist (customer_id, product_id, added_at) VALUES (1, 4, '2024-12-01 12:00:00');",
                "INSERT INTO wishlist (customer_id, product_id, added_at) VALUES (2, 5, '2024-12-02 12:00:00');"});
    seed_table(a, "reviews", "An existing review by customer 2.",
               {"INSERT INTO reviews (id, customer_id, product_id, rating, body, created_at) VALUES (1, 2, 10, 5, "
                "'Exactly as pictured', '2024-11-30 18:00:00');"});

    const auto& p = names;  // p[i - 1] is product i
    const std::string others = "SELECT id, name, email, phone FROM customers WHERE id <> 1";
    {
        SpecBuilder s;
        s.created("cart_line", "SELECT product_id, quantity FROM cart_items WHERE customer_id = 1 AND product_id = 3 AND "
                               "quantity = 2", "product_id");
        s.unchanged("other_lines", "SELECT product_id, quantity FROM cart_items WHERE product_id <> 3");
        add_task(a, "add-to-cart", "Add 2 units of the " + p[2] + " to my cart.", s,
                 "Customer 1's cart holds product 3 with quantity 2.", "Missing line, wrong quantity, or other lines changed.",
                 {{"search_products", {{"query", p[2]}}}, {"add_to_cart", {{"product_id", 3}, {"quantity", 2}}}},
                 "Added 2 units of the " + p[2] + " to your cart.");
    }
    {
        SpecBuilder s;
        s.created("new_order", "SELECT id FROM orders WHERE customer_id = 1 AND address_id = 2 AND status = 'placed' AND "
                               "total_cents = " + std::to_string(price[1] + 2 * price[2]), "id");
        s.equals("cart_empty", "SELECT COUNT(*) FROM cart_items WHERE customer_id = 1", 0);
        s.unchanged("other_carts", "SELECT product_id, quantity FROM cart_items WHERE customer_id <> 1");
        add_task(a, "checkout-cart", "Check out everything in my cart and ship it to my Work address.", s,
                 "A placed order to address 2 totalling the cart, and an empty cart.",
                 "No such order, wrong address or total, or another customer's cart changed.",
                 {{"view_cart", Json::object()}, {"list_addresses", Json::object()}, {"checkout", {{"address_id", 2}}}},
                 "Your order has been placed and will ship to your Work address.");
    }
    {
        SpecBuilder s;
        s.equals("order_cancelled", "SELECT status FROM orders WHERE id = 2", "cancelled");
        s.equals("shipped_untouched", "SELECT status FROM orders WHERE id = 1", "shipped", true);
        add_task(a, "cancel-order", "Cancel my order that has not shipped yet.", s, "Order 2 is cancelled.",
                 "Order 2 still placed, or the shipped order was altered.",
                 {{"list_orders", Json::object()}, {"cancel_order", {{"order_id", 2}}}},
                 "Your unshipped order has been cancelled.");
    }
    {
        SpecBuilder s;
        s.equals("line_gone", "SELECT COUNT(*) FROM cart_items WHERE customer_id = 1 AND product_id = 1", 0);
        s.unchanged("other_lines", "SELECT product_id, quantity FROM cart_items WHERE product_id <> 1");
        add_task(a, "remove-from-cart", "Remove the " + p[0] + " from my cart.", s, "Product 1 no longer in customer 1's cart.",
                 "Product 1 still in the cart, or other lines changed.",
                 {{"view_cart", Json::object()}, {"remove_from_cart", {{"product_id", 1}}}},
                 "The " + p[0] + " is no longer in your cart.");
    }
    const auto street = streets[3];
    const auto city = cities[3];
    {
        SpecBuilder s;
        s.created("cabin", "SELECT id FROM addresses WHERE customer_id = 1 AND label = 'Cabin' AND street = " + q(street) +
                               " AND city = " + q(city) + " AND is_default = 1", "id");
        s.equals("single_default", "SELECT COUNT(*) FROM addresses WHERE customer_id = 1 AND is_default = 1", 1);
        s.unchanged("other_addresses", "SELECT id, label, is_default FROM addresses WHERE customer_id <> 1");
        add_task(a, "add-address", "Add an address labelled Cabin at " + street + ", " + city + " and make it my default.", s,
                 "A new default Cabin address for customer 1 and no other default.",
                 "No such address, not default, or two defaults.",
                 {{"add_address", {{"label", "Cabin"}, {"street", street}, {"city", city}, {"make_default", true}}}},
                 "Your Cabin address is saved and set as the default.");
    }
    {
        SpecBuilder s;
        s.equals("default_is_work", "SELECT group_concat(id) FROM addresses WHERE customer_id = 1 AND is_default = 1", "2");
        s.unchanged("other_addresses", "SELECT id, label, is_default FROM addresses WHERE customer_id <> 1");
        add_task(a, "set-default-address", "Make my Work address the default shipping address.", s,
                 "Address 2 is customer 1's only default.", "Another address is still default.",
                 {{"list_addresses", Json::object()}, {"set_default_address", {{"address_id", 2}}}},
                 "Your Work address is now the default.");
    }
    {
        SpecBuilder s;
        s.created("saved", "SELECT product_id FROM wishlist WHERE customer_id = 1 AND product_id = 5", "product_id");
        s.unchanged("other_saved", "SELECT customer_id, product_id FROM wishlist WHERE product_id <> 5");
        add_task(a, "wishlist-add", "Save the " + p[4] + " to my wishlist.", s, "Product 5 on customer 1's wishlist.",
                 "Product 5 not saved or other wishlist rows changed.",
                 {{"search_products", {{"query", p[4]}}}, {"add_to_wishlist", {{"product_id", 5}}}},
                 "The " + p[4] + " is on your wishlist.");
    }
    const std::vector<std::string> bodies = {"Sturdy and well made", "Arrived quickly and works well", "Good value for the price",
                                             "Better than expected"};
    const auto body = bodies[rng() % bodies.size()];
    {
        SpecBuilder s;
        s.created("review", "SELECT id FROM reviews WHERE customer_id = 1 AND product_id = 6 AND rating = 4 AND body = " +
                                q(body), "id");
        s.unchanged("other_reviews", "SELECT id, rating, body FROM reviews WHERE customer_id <> 1");
        add_task(a, "review-purchase", "Leave a 4 star review of the " + p[5] + " I bought, saying: " + body, s,
                 "A 4 star review of product 6 by customer 1 with the given text.", "No such review.",
                 {{"list_orders", Json::object()}, {"write_review", {{"product_id", 6}, {"rating", 4}, {"body", body}}}},
                 "Your review of the " + p[5] + " is posted.");
    }
    const auto email = lower(first_name(people[0])) + ".new@example.net";
    {
        SpecBuilder s;
        s.equals("email_updated", "SELECT email FROM customers WHERE id = 1", email);
        s.unchanged("other_customers", others);
        add_task(a, "update-email", "Change my email address to " + email + ".", s, "Customer 1 has email " + email + ".",
                 "Email unchanged or another customer modified.", {{"update_contact", {{"email", email}}}},
                 "Your email is now " + email + ".");
    }
    {
        SpecBuilder s;
        s.equals("quantity_set", "SELECT quantity FROM cart_items WHERE customer_id = 1 AND product_id = 2", 5);
        s.unchanged("other_lines", "SELECT product_id, quantity FROM cart_items WHERE product_id <> 2");
        add_task(a, "update-cart-quantity", "Change the quantity of the " + p[1] + " in my cart to 5.", s,
                 "Product 2 has quantity 5 in customer 1's cart.", "Quantity not 5 or other lines changed.",
                 {{"view_cart", Json::object()}, {"update_cart_item", {{"product_id", 2}, {"quantity", 5}}}},
                 "The " + p[1] + " quantity is now 5.");
    }
    return a;
}

// Lending: catalogue, loans, renewals, holds, fines.

Artifacts lending(Rng& rng) {
    Artifacts a;
    a.schema = R"(CREATE TABLE members (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  email TEXT NOT NULL UNIQUE,
  joined_at TEXT NOT NULL
);

CREATE TABLE books (
  id INTEGER PRIMARY KEY,
  title TEXT NOT NULL,
  author TEXT NOT NULL,
  genre TEXT NOT NULL,
  copies_available INTEGER NOT NULL CHECK (copies_available >= 0),
  is_reference INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX idx_books_author ON books (author);

CREATE TABLE loans (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  member_id INTEGER NOT NULL REFERENCES members (id),
  book_id INTEGER NOT NULL REFERENCES books (id),
  borrowed_at TEXT NOT NULL,
  due_at TEXT NOT NULL,
  returned_at TEXT,
  renewals INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX idx_loans_member ON loans (member_id);

CREATE TABLE holds (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  member_id INTEGER NOT NULL REFERENCES members (id),
  book_id INTEGER NOT NULL REFERENCES books (id),
  placed_at TEXT NOT NULL,
  status TEXT NOT NULL DEFAULT 'active'
);

CREATE TABLE fines (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  member_id INTEGER NOT NULL REFERENCES members (id),
  loan_id INTEGER REFERENCES loans (id),
  amount_cents INTEGER NOT NULL CHECK (amount_cents > 0),
  reason TEXT NOT NULL,
  paid_at TEXT
);
)";
    const std::string cu = ":current_user_id";
    const std::string book_cols = "id:integer title:text author:text genre:text copies_available:integer is_reference:boolean";
    const std::string book_select = "SELECT id, title, author, genre, copies_available, is_reference FROM books";
    auto& t = a.tools;
    t.push_back(tool("search_books", "Search the catalogue by title, author or genre",
                     "Returns books ordered by id. Filters are optional and combined with AND.", {"catalogue"}, false,
                     {param("query", "text", false, "Substring of the title or author", "Le Guin"),
                      param("genre", "text", false, "Exact genre", "fantasy"),
                      param("limit", "integer", false, "Maximum number of books", 5, 20)},
                     {stmt("books", book_select + " WHERE (:genre IS NULL OR genre = :genre) AND (:query IS NULL OR title LIKE "
                                                  "'%' || :query || '%' OR author LIKE '%' || :query || '%') ORDER BY id LIMIT "
                                                  ":limit")},
                     {field("books", "books", "rows", book_cols)}));
    t.push_back(tool("get_book", "Fetch one book by id", "Returns the catalogue entry for a single book.", {"catalogue"}, false,
                     {param("book_id", "integer", true, "Book id", 4)},
                     {stmt("book", book_select + " WHERE id = :book_id", "nonempty", "book not found")},
                     {field("book", "book", "row", book_cols)}));
    t.push_back(tool("list_my_loans", "List the current member's loans",
                     "Active loans by default; set include_returned to see history too.", {"loans"}, false,
                     {param("include_returned", "boolean", false, "Include returned loans", false, false)},
                     {stmt("loans", "SELECT l.id AS loan_id, l.book_id, b.title, l.borrowed_at, l.due_at, l.returned_at, "
                                    "l.renewals FROM loans l JOIN books b ON b.id = l.book_id WHERE l.member_id = " + cu +
                                        " AND (:include_returned OR l.returned_at IS NULL) ORDER BY l.id")},
                     {field("loans", "loans", "rows",
                            "loan_id:integer book_id:integer title:text borrowed_at:text due_at:text returned_at:text "
                            "renewals:integer")}));
    t.push_back(tool("borrow_book", "Borrow an available book", "Creates a loan and takes one copy off the shelf.", {"loans"}, true,
                     {param("book_id", "integer", true, "Book to borrow", 5),
                      param("days", "integer", false, "Loan length in days", 21, 14)},
                     {stmt("check", "SELECT copies_available > 0 AND is_reference = 0 FROM books WHERE id = :book_id", "truthy",
                           "book not available"),
                      stmt("take", "UPDATE books SET copies_available = copies_available - 1 WHERE id = :book_id"),
                      stmt("insert", "INSERT INTO loans (member_id, book_id, borrowed_at, due_at) VALUES (" + cu +
                                         ", :book_id, :now, datetime(:now, '+' || :days || ' days'))"),
                      stmt("loan", "SELECT id AS loan_id, book_id, borrowed_at, due_at FROM loans WHERE id = last_insert_rowid()")},
                     {field("loan", "loan", "row", "loan_id:integer book_id:integer borrowed_at:text due_at:text")}));
    t.push_back(tool("return_book", "Return one of the current member's active loans",
                     "Marks the loan returned and puts the copy back on the shelf.", {"loans"}, true,
                     {param("loan_id", "integer", true, "Loan to close", 2)},
                     {stmt("close", "UPDATE loans SET returned_at = :now WHERE id = :loan_id AND member_id = " + cu +
                                        " AND returned_at IS NULL", "nonempty", "no active loan with that id"),
                      stmt("shelve", "UPDATE books SET copies_available = copies_available + 1 WHERE id = (SELECT book_id FROM "
                                     "loans WHERE id = :loan_id)"),
                      stmt("loan", "SELECT id AS loan_id, book_id, returned_at FROM loans WHERE id = :loan_id")},
                     {field("loan", "loan", "row", "loan_id:integer book_id:integer returned_at:text")}));
    t.push_back(tool("renew_loan", "Extend the due date of an active loan",
                     "Adds days to the current due date. A loan can be renewed twice.", {"loans"}, true,
                     {param("loan_id", "integer", true, "Loan to renew", 2),
                      param("days", "integer", false, "Days to add", 7, 14)},
                     {stmt("renew", "UPDATE loans SET due_at = datetime(due_at, '+' || :days || ' days'), renewals = renewals "
                                    "+ 1 WHERE id = :loan_id AND member_id = " + cu +
                                        " AND returned_at IS NULL AND renewals < 2", "nonempty", "loan cannot be renewed"),
                      stmt("loan", "SELECT id AS loan_id, due_at, renewals FROM loans WHERE id = :loan_id")},
                     {field("loan", "loan", "row", "loan_id:integer due_at:text renewals:integer")}));
    t.push_back(tool("place_hold", "Reserve a book for the next free copy", "One active hold per book and member.", {"holds"}, true,
                     {param("book_id", "integer", true, "Book to reserve", 6)},
                     {stmt("exists", "SELECT COUNT(*) FROM books WHERE id = :book_id", "truthy", "book not found"),
                      stmt("dup", "SELECT COUNT(*) = 0 FROM holds WHERE member_id = " + cu +
                                      " AND book_id = :book_id AND status = 'active'", "truthy", "hold already placed"),
                      stmt("insert", "INSERT INTO holds (member_id, book_id, placed_at, status) VALUES (" + cu +
                                         ", :book_id, :now, 'active')"),
                      stmt("hold", "SELECT id AS hold_id, book_id, placed_at, status FROM holds WHERE id = last_insert_rowid()")},
                     {field("hold", "hold", "row", "hold_id:integer book_id:integer placed_at:text status:text")}));
    t.push_back(tool("list_my_holds", "List the current member's holds", "Includes cancelled holds.", {"holds"}, false,
                     Json::array(),
                     {stmt("holds", "SELECT h.id AS hold_id, h.book_id, b.title, h.placed_at, h.status FROM holds h JOIN books "
                                    "b ON b.id = h.book_id WHERE h.member_id = " + cu + " ORDER BY h.id")},
                     {field("holds", "holds", "rows", "hold_id:integer book_id:integer title:text placed_at:text status:text")}));
    t.push_back(tool("cancel_hold", "Cancel an active hold", "The hold stays on record as cancelled.", {"holds"}, true,
                     {param("hold_id", "integer", true, "Hold to cancel", 1)},
                     {stmt("cancel", "UPDATE holds SET status = 'cancelled' WHERE id = :hold_id AND member_id = " + cu +
                                         " AND status = 'active'", "nonempty", "no active hold with that id"),
                      stmt("hold", "SELECT id AS hold_id, status FROM holds WHERE id = :hold_id")},
                     {field("hold", "hold", "row", "hold_id:integer status:text")}));
    t.push_back(tool("list_my_fines", "List the current member's fines", "Unpaid fines by default.", {"fines"}, false,
                     {param("include_paid", "boolean", false, "Include paid fines", false, false)},
                     {stmt("fines", "SELECT id AS fine_id, loan_id, amount_cents, reason, paid_at FROM fines WHERE member_id = " +
                                        cu + " AND (:include_paid OR paid_at IS NULL) ORDER BY id")},
                     {field("fines", "fines", "rows",
                            "fine_id:integer loan_id:integer amount_cents:integer reason:text paid_at:text")}));
    t.push_back(tool("pay_fine", "Pay an unpaid fine", "Records the payment time.", {"fines"}, true,
                     {param("fine_id", "integer", true, "Fine to pay", 1)},
                     {stmt("pay", "UPDATE fines SET paid_at = :now WHERE id = :fine_id AND member_id = " + cu +
                                      " AND paid_at IS NULL", "nonempty", "no unpaid fine with that id"),
                      stmt("fine", "SELECT id AS fine_id, amount_cents, paid_at FROM fines WHERE id = :fine_id")},
                     {field("fine", "fine", "row", "fine_id:integer amount_cents:integer paid_at:text")}));
    t.push_back(tool("update_profile", "Change the current member's name or email",
                     "Omitted fields keep their value. Emails must be unique across members.", {"profile"}, true,
                     {param("name", "text", false, "New display name", "Ada Lovelace"),
                      param("email", "text", false, "New email address", "ada.new@example.org")},
                     {stmt("update", "UPDATE members SET name = COALESCE(:name, name), email = COALESCE(:email, email) WHERE "
                                     "id = " + cu, "nonempty", "member not found"),
                      stmt("member", "SELECT id, name, email FROM members WHERE id = " + cu)},
                     {field("member", "member", "row", "id:integer name:text email:text")}));

    struct Book {
        std::string title, author, genre;
    };
    const std::vector<Book> pool = {
        {"The Dispossessed", "Ursula K. Le Guin", "science-fiction"}, {"Kindred", "Octavia E. Butler", "science-fiction"},
        {"Gaudy Night", "Dorothy L. Sayers", "mystery"},              {"The Moonstone", "Wilkie Collins", "mystery"},
        {"Middlemarch", "George Eliot", "classic"},                   {"Persuasion", "Jane Austen", "classic"},
        {"The Remains of the Day", "Kazuo Ishiguro", "fiction"},      {"Beloved", "Toni Morrison", "fiction"},
        {"Piranesi", "Susanna Clarke", "fantasy"},                    {"The Hobbit", "J. R. R. Tolkien", "fantasy"},
        {"Dune", "Frank Herbert", "science-fiction"},                 {"Rebecca", "Daphne du Maurier", "mystery"},
        {"Wolf Hall", "Hilary Mantel", "historical"},                 {"The Leopard", "Giuseppe Tomasi di Lampedusa", "historical"},
        {"A Room with a View", "E. M. Forster", "classic"},           {"Neuromancer", "William Gibson", "science-fiction"},
        {"The Name of the Rose", "Umberto Eco", "mystery"},           {"Uprooted", "Naomi Novik", "fantasy"},
        {"Cloud Atlas", "David Mitchell", "fiction"},                 {"Silent Spring", "Rachel Carson", "nonfiction"}};
    const auto books = pick(rng, pool, 14);
    std::vector<std::string> rows;
    for (int i = 1; i <= 14; ++i) {
        const int copies = i == 6 ? 0 : uniform(rng, 1, 4);
        rows.push_back("INSERT INTO books (id, title, author, genre, copies_available, is_reference) VALUES (" +
                       std::to_string(i) + ", " + q(books[i - 1].title) + ", " + q(books[i - 1].author) + ", " +
                       q(books[i - 1].genre) + ", " + std::to_string(copies) + ", " + (i == 14 ? "1" : "0") + ");");
    }
    const auto people = pick(rng, kPeople, 5);
    std::vector<std::string> members;
    for (int i = 1; i <= 5; ++i)
        members.push_back("INSERT INTO members (id, name, email, joined_at) VALUES (" + std::to_string(i) + ", " +
                          q(people[i - 1]) + ", " + q(lower(first_name(people[i - 1])) + "@example.org") + ", '202" +
                          std::to_string(uniform(rng, 1, 4)) + "-0" + std::to_string(uniform(rng, 1, 9)) + "-15 10:00:00');");
    seed_table(a, "members", "Five members; member 1 is the acting user.", members);
    seed_table(a, "books", "Fourteen titles; book 6 has no copy on the shelf and book 14 is reference only.", rows);
    seed_table(a, "loans", "Member 1 has an overdue, an active and a returned loan; member 2 one active loan.",
               {"INSERT INTO loans (id, member_id, book_id, borrowed_at, due_at, returned_at, renewals) VALUES (1, 1, 1, "
                "'2024-11-20 10:00:00', '2024-12-04 00:00:00', NULL, 0);",
                "INSERT INTO loans (id, member_id, book_id, borrowed_at, due_at, returned_at, renewals) VALUES (2, 1, 2, "
                "'2024-12-27 16:00:00', '2025-01-10 00:00:00', NULL, 0);",
                "INSERT INTO loans (id, member_id, book_id, borrowed_at, due_at, returned_at, renewals) VALUES (3, 1, 3, "
                "'2024-10-01 09:00:00', '2024-10-15 00:00:00', '2024-10-12 11:00:00', 0);",
                "INSERT INTO loans (id, member_id, book_id, borrowed_at, due_at, returned_at, renewals) VALUES (4, 2, 8, "
                "'2024-12-15 14:00:00', '2024-12-29 00:00:00', NULL, 1);"});
    seed_table(a, "holds", "Each of members 1 and 2 holds one book.",
               {"INSERT INTO holds (id, member_id, book_id, placed_at, status) VALUES (1, 1, 4, '2024-12-30 09:00:00', 'active');",
                "INSERT INTO holds (id, member_id, book_id, placed_at, status) VALUES (2, 2, 6, '2024-12-31 09:00:00', 'active');"});
    seed_table(a, "fines", "Member 1 owes one fine and paid another; member 2 owes one.",
               {"INSERT INTO fines (id, member_id, loan_id, amount_cents, reason, paid_at) VALUES (1, 1, 1, 350, 'overdue', NULL);",
                "INSERT INTO fines (id, member_id, loan_id, amount_cents, reason, paid_at) VALUES (2, 1, 3, 100, 'damaged "
                "cover', '2024-10-12 11:00:00');",
                "INSERT INTO fines (id, member_id, loan_id, amount_cents, reason, paid_at) VALUES (3, 2, 4, 200, 'overdue', NULL);"});

    const auto& b = books;  // b[i - 1] is book i
    const std::string others = "SELECT id, name, email FROM members WHERE id <> 1";
    {
        SpecBuilder s;
        s.created("loan", "SELECT id FROM loans WHERE member_id = 1 AND book_id = 5 AND returned_at IS NULL AND due_at = "
                          "'2025-01-22 00:00:00'", "id");
        s.unchanged("other_loans", "SELECT id, book_id, returned_at FROM loans WHERE book_id <> 5");
        add_task(a, "borrow-title", "Borrow a copy of " + b[4].title + " for 21 days.", s,
                 "A new active loan of book 5 for member 1 due in 21 days.", "No such loan or other loans changed.",
                 {{"search_books", {{"query", b[4].title}}}, {"borrow_book", {{"book_id", 5}, {"days", 21}}}},
                 "Borrowed " + b[4].title + "; it is due on 2025-01-22.");
    }
    {
        SpecBuilder s;
        s.equals("returned", "SELECT returned_at IS NOT NULL FROM loans WHERE id = 2", 1);
        s.equals("overdue_still_out", "SELECT returned_at IS NULL FROM loans WHERE id = 1", 1, true);
        add_task(a, "return-title", "Return my loan of " + b[1].title + ".", s, "Loan 2 is returned.",
                 "Loan 2 still active, or a different loan was returned.",
                 {{"list_my_loans", Json::object()}, {"return_book", {{"loan_id", 2}}}}, b[1].title + " has been returned.");
    }
    {
        SpecBuilder s;
        s.equals("due_extended", "SELECT due_at FROM loans WHERE id = 2", "2025-01-17 00:00:00");
        s.equals("overdue_due_kept", "SELECT due_at FROM loans WHERE id = 1", "2024-12-04 00:00:00", true);
        add_task(a, "renew-title", "Renew my loan of " + b[1].title + " for another 7 days.", s,
                 "Loan 2 is due on 2025-01-17.", "Due date unchanged or another loan renewed.",
                 {{"list_my_loans", Json::object()}, {"renew_loan", {{"loan_id", 2}, {"days", 7}}}},
                 b[1].title + " is now due on 2025-01-17.");
    }
    {
        SpecBuilder s;
        s.created("hold", "SELECT id FROM holds WHERE member_id = 1 AND book_id = 6 AND status = 'active'", "id");
        s.unchanged("other_holds", "SELECT id, status FROM holds WHERE book_id <> 6 OR member_id <> 1");
        add_task(a, "hold-title", "Place a hold on " + b[5].title + ".", s, "An active hold on book 6 for member 1.",
                 "No such hold or other holds changed.",
                 {{"search_books", {{"query", b[5].title}}}, {"place_hold", {{"book_id", 6}}}},
                 "You have a hold on " + b[5].title + ".");
    }
    {
        SpecBuilder s;
        s.equals("hold_cancelled", "SELECT status FROM holds WHERE id = 1", "cancelled");
        s.unchanged("other_holds", "SELECT id, status FROM holds WHERE id <> 1");
        add_task(a, "cancel-hold", "Cancel my hold on " + b[3].title + ".", s, "Hold 1 is cancelled.",
                 "Hold 1 still active or other holds changed.",
                 {{"list_my_holds", Json::object()}, {"cancel_hold", {{"hold_id", 1}}}},
                 "Your hold on " + b[3].title + " is cancelled.");
    }
    {
        SpecBuilder s;
        s.equals("nothing_owed", "SELECT COUNT(*) FROM fines WHERE member_id = 1 AND paid_at IS NULL", 0);
        s.unchanged("other_fines", "SELECT id, paid_at FROM fines WHERE member_id <> 1");
        add_task(a, "pay-fine", "Pay my outstanding library fine.", s, "Member 1 has no unpaid fines.",
                 "An unpaid fine remains or another member's fine changed.",
                 {{"list_my_fines", Json::object()}, {"pay_fine", {{"fine_id", 1}}}}, "Your fine of 3.50 is paid.");
    }
    {
        SpecBuilder s;
        s.equals("no_overdue", "SELECT COUNT(*) FROM loans WHERE member_id = 1 AND returned_at IS NULL AND due_at < "
                               "'2025-01-01 00:00:00'", 0);
        s.equals("current_still_out", "SELECT returned_at IS NULL FROM loans WHERE id = 2", 1, true);
        add_task(a, "return-overdue", "Return every loan of mine that is already overdue.", s,
                 "Member 1 has no overdue active loans.", "An overdue loan remains or a current loan was returned.",
                 {{"list_my_loans", Json::object()}, {"return_book", {{"loan_id", 1}}}},
                 "Returned " + b[0].title + ", your only overdue loan.");
    }
    const auto email = lower(first_name(people[0])) + ".reader@example.net";
    {
        SpecBuilder s;
        s.equals("email_updated", "SELECT email FROM members WHERE id = 1", email);
        s.unchanged("other_members", others);
        add_task(a, "update-email", "Change my email address to " + email + ".", s, "Member 1 has email " + email + ".",
                 "Email unchanged or another member modified.", {{"update_profile", {{"email", email}}}},
                 "Your email is now " + email + ".");
    }
    const auto new_name = first_name(people[0]) + " " + std::vector<std::string>{"Lovelace", "Marsh", "Quill", "Ashdown"}[rng() % 4];
    {
        SpecBuilder s;
        s.equals("name_updated", "SELECT name FROM members WHERE id = 1", new_name);
        s.unchanged("other_members", others);
        add_task(a, "update-name", "Change the name on my membership to " + new_name + ".", s,
                 "Member 1 is named " + new_name + ".", "Name unchanged or another member modified.",
                 {{"update_profile", {{"name", new_name}}}}, "Your name is now " + new_name + ".");
    }
    {
        SpecBuilder s;
        s.created("loan", "SELECT id FROM loans WHERE member_id = 1 AND book_id = 7 AND returned_at IS NULL AND due_at = "
                          "'2025-01-15 00:00:00'", "id");
        s.unchanged("other_loans", "SELECT id, book_id, returned_at FROM loans WHERE book_id <> 7");
        add_task(a, "borrow-by-author", "Borrow the book by " + b[6].author + " for the standard loan period.", s,
                 "A new active loan of book 7 due in 14 days.", "No such loan or a different book borrowed.",
                 {{"search_books", {{"query", b[6].author}}}, {"borrow_book", {{"book_id", 7}}}},
                 "Borrowed " + b[6].title + "; it is due on 2025-01-15.");
    }
    return a;
}

// Booking: providers, time slots, appointments, waitlist, favourites.

Artifacts booking(Rng& rng) {
    Artifacts a;
    a.schema = R"(CREATE TABLE clients (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  email TEXT NOT NULL UNIQUE,
  phone TEXT
);

CREATE TABLE providers (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  specialty TEXT NOT NULL,
  city TEXT NOT NULL
);

CREATE TABLE slots (
  id INTEGER PRIMARY KEY,
  provider_id INTEGER NOT NULL REFERENCES providers (id),
  starts_at TEXT NOT NULL,
  duration_min INTEGER NOT NULL,
  capacity INTEGER NOT NULL DEFAULT 1,
  booked INTEGER NOT NULL DEFAULT 0 CHECK (booked >= 0 AND booked <= capacity)
);
CREATE INDEX idx_slots_provider ON slots (provider_id, starts_at);

CREATE TABLE bookings (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  client_id INTEGER NOT NULL REFERENCES clients (id),
  slot_id INTEGER NOT NULL REFERENCES slots (id),
  status TEXT NOT NULL,
  note TEXT,
  created_at TEXT NOT NULL
);

CREATE TABLE waitlist (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  client_id INTEGER NOT NULL REFERENCES clients (id),
  slot_id INTEGER NOT NULL REFERENCES slots (id),
  joined_at TEXT NOT NULL,
  UNIQUE (client_id, slot_id)
);

CREATE TABLE favorites (
  client_id INTEGER NOT NULL REFERENCES clients (id),
  provider_id INTEGER NOT NULL REFERENCES providers (id),
  PRIMARY KEY (client_id, provider_id)
);
)";
    const std::string cu = ":current_user_id";
    const std::string booking_cols = "booking_id:integer slot_id:integer status:text note:text";
    const std::string booking_sql = "SELECT id AS booking_id, slot_id, status, note FROM bookings WHERE id = :booking_id";
    auto& t = a.tools;
    t.push_back(tool("search_providers", "Find providers by specialty or city", "Returns providers ordered by id.",
                     {"providers"}, false,
                     {param("specialty", "text", false, "Exact specialty", "physiotherapy"),
                      param("city", "text", false, "Exact city", "Leeds"),
                      param("query", "text", false, "Substring of the provider name", "Haddad")},
                     {stmt("providers", "SELECT id AS provider_id, name, specialty, city FROM providers WHERE (:specialty IS "
                                        "NULL OR specialty = :specialty) AND (:city IS NULL OR city = :city) AND (:query IS "
                                        "NULL OR name LIKE '%' || :query || '%') ORDER BY id")},
                     {field("providers", "providers", "rows", "provider_id:integer name:text specialty:text city:text")}));
    t.push_back(tool("list_slots", "List a provider's time slots",
                     "Includes full slots; a slot is open when booked is below capacity.", {"slots"}, false,
                     {param("provider_id", "integer", true, "Provider", 2),
                      param("date", "text", false, "Only this day, YYYY-MM-DD", "2025-01-04"),
                      param("open_only", "boolean", false, "Hide full slots", true, false)},
                     {stmt("slots", "SELECT id AS slot_id, starts_at, duration_min, capacity, booked FROM slots WHERE "
                                    "provider_id = :provider_id AND (:date IS NULL OR date(starts_at) = :date) AND (NOT "
                                    ":open_only OR booked < capacity) ORDER BY starts_at, id")},
                     {field("slots", "slots", "rows",
                            "slot_id:integer starts_at:text duration_min:integer capacity:integer booked:integer")}));
    t.push_back(tool("list_my_bookings", "List the current client's appointments",
                     "Confirmed appointments by default, ordered by start time.", {"bookings"}, false,
                     {param("include_cancelled", "boolean", false, "Include cancelled appointments", false, false)},
                     {stmt("bookings", "SELECT b.id AS booking_id, b.slot_id, p.name AS provider, s.starts_at, b.status, b.note "
                                       "FROM bookings b JOIN slots s ON s.id = b.slot_id JOIN providers p ON p.id = "
                                       "s.provider_id WHERE b.client_id = " + cu +
                                           " AND (:include_cancelled OR b.status = 'confirmed') ORDER BY s.starts_at, b.id")},
                     {field("bookings", "bookings", "rows",
                            "booking_id:integer slot_id:integer provider:text starts_at:text status:text note:text")}));
    t.push_back(tool("book_slot", "Book an open slot", "Creates a confirmed appointment for the current client.", {"bookings"},
                     true,
                     {param("slot_id", "integer", true, "Slot to book", 14),
                      param("note", "text", false, "Message for the provider", "First visit")},
                     {stmt("check", "SELECT booked < capacity FROM slots WHERE id = :slot_id", "truthy", "slot is not available"),
                      stmt("take", "UPDATE slots SET booked = booked + 1 WHERE id = :slot_id"),
                      stmt("insert", "INSERT INTO bookings (client_id, slot_id, status, note, created_at) VALUES (" + cu +
                                         ", :slot_id, 'confirmed', :note, :now)"),
                      stmt("booking", "SELECT id AS booking_id, slot_id, status, note FROM bookings WHERE id = "
                                      "last_insert_rowid()")},
                     {field("booking", "booking", "row", booking_cols)}));
    t.push_back(tool("cancel_booking", "Cancel a confirmed appointment", "Frees the slot.", {"bookings"}, true,
                     {param("booking_id", "integer", true, "Appointment to cancel", 2)},
                     {stmt("cancel", "UPDATE bookings SET status = 'cancelled' WHERE id = :booking_id AND client_id = " + cu +
                                         " AND status = 'confirmed'", "nonempty", "no confirmed booking with that id"),
                      stmt("release", "UPDATE slots SET booked = booked - 1 WHERE id = (SELECT slot_id FROM bookings WHERE id "
                                      "= :booking_id)"),
                      stmt("booking", booking_sql)},
                     {field("booking", "booking", "row", booking_cols)}));
    t.push_back(tool("reschedule_booking", "Move an appointment to another open slot",
                     "Frees the old slot and takes the new one.", {"bookings"}, true,
                     {param("booking_id", "integer", true, "Appointment to move", 1),
                      param("slot_id", "integer", true, "New slot", 2)},
                     {stmt("owned", "SELECT COUNT(*) FROM bookings WHERE id = :booking_id AND client_id = " + cu +
                                        " AND status = 'confirmed'", "truthy", "no confirmed booking with that id"),
                      stmt("open", "SELECT booked < capacity FROM slots WHERE id = :slot_id", "truthy", "slot is not available"),
                      stmt("release", "UPDATE slots SET booked = booked - 1 WHERE id = (SELECT slot_id FROM bookings WHERE id "
                                      "= :booking_id)"),
                      stmt("take", "UPDATE slots SET booked = booked + 1 WHERE id = :slot_id"),
                      stmt("move", "UPDATE bookings SET slot_id = :slot_id WHERE id = :booking_id"),
                      stmt("booking", booking_sql)},
                     {field("booking", "booking", "row", booking_cols)}));
    t.push_back(tool("set_booking_note", "Attach a note to an appointment", "Replaces any existing note.", {"bookings"}, true,
                     {param("booking_id", "integer", true, "Appointment", 5),
                      param("note", "text", true, "Note text", "Running ten minutes late")},
                     {stmt("update", "UPDATE bookings SET note = :note WHERE id = :booking_id AND client_id = " + cu, "nonempty",
                           "no booking with that id"),
                      stmt("booking", booking_sql)},
                     {field("booking", "booking", "row", booking_cols)}));
    t.push_back(tool("join_waitlist", "Join the waitlist of a full slot", "Each client can wait once per slot.", {"waitlist"},
                     true, {param("slot_id", "integer", true, "Full slot", 7)},
                     {stmt("full", "SELECT booked >= capacity FROM slots WHERE id = :slot_id", "truthy",
                           "slot is open; book it instead"),
                      stmt("insert", "INSERT INTO waitlist (client_id, slot_id, joined_at) VALUES (" + cu + ", :slot_id, :now)"),
                      stmt("entry", "SELECT id AS entry_id, slot_id, joined_at FROM waitlist WHERE id = last_insert_rowid()")},
                     {field("entry", "entry", "row", "entry_id:integer slot_id:integer joined_at:text")}));
    t.push_back(tool("list_my_waitlist", "List the slots the current client is waiting for", "Ordered by slot start.",
                     {"waitlist"}, false, Json::array(),
                     {stmt("entries", "SELECT w.id AS entry_id, w.slot_id, p.name AS provider, s.starts_at FROM waitlist w JOIN "
                                      "slots s ON s.id = w.slot_id JOIN providers p ON p.id = s.provider_id WHERE w.client_id "
                                      "= " + cu + " ORDER BY s.starts_at")},
                     {field("entries", "entries", "rows", "entry_id:integer slot_id:integer provider:text starts_at:text")}));
    t.push_back(tool("leave_waitlist", "Leave the waitlist of a slot", "Removes the current client's entry.", {"waitlist"}, true,
                     {param("slot_id", "integer", true, "Slot", 5)},
                     {stmt("delete", "DELETE FROM waitlist WHERE client_id = " + cu + " AND slot_id = :slot_id", "nonempty",
                           "not on that waitlist")},
                     {field("removed", "delete", "affected", "")}));
    t.push_back(tool("add_favorite", "Save a provider as a favorite", "Providers can be saved once.", {"providers"}, true,
                     {param("provider_id", "integer", true, "Provider", 5)},
                     {stmt("insert", "INSERT INTO favorites (client_id, provider_id) VALUES (" + cu + ", :provider_id)"),
                      stmt("favorites", "SELECT f.provider_id, p.name FROM favorites f JOIN providers p ON p.id = f.provider_id "
                                        "WHERE f.client_id = " + cu + " ORDER BY f.provider_id")},
                     {field("favorites", "favorites", "rows", "provider_id:integer name:text")}));
    t.push_back(tool("update_contact", "Change the current client's email or phone", "Omitted fields keep their value.",
                     {"profile"}, true,
                     {param("email", "text", false, "New email address", "new@example.com"),
                      param("phone", "text", false, "New phone number", "+31 20 555 0199")},
                     {stmt("update", "UPDATE clients SET email = COALESCE(:email, email), phone = COALESCE(:phone, phone) WHERE "
                                     "id = " + cu, "nonempty", "client not found"),
                      stmt("client", "SELECT id, name, email, phone FROM clients WHERE id = " + cu)},
                     {field("client", "client", "row", "id:integer name:text email:text phone:text")}));

    const std::vector<std::string> specialties = {"physiotherapy", "dentistry", "massage", "nutrition", "dermatology",
                                                  "counselling"};
    const auto people = pick(rng, kPeople, 10);
    const auto cities = pick(rng, kCities, 3);
    std::vector<std::string> clients, providers, slots;
    for (int i = 1; i <= 4; ++i)
        clients.push_back("INSERT INTO clients (id, name, email, phone) VALUES (" + std::to_string(i) + ", " +
                          q(people[i - 1]) + ", " + q(lower(first_name(people[i - 1])) + "@example.com") + ", " +
                          q("+31 20 555 01" + std::to_string(10 + i)) + ");");
    std::vector<std::string> provider(7);
    for (int p = 1; p <= 6; ++p) {
        provider[p] = people[3 + p];
        providers.push_back("INSERT INTO providers (id, name, specialty, city) VALUES (" + std::to_string(p) + ", " +
                            q(provider[p]) + ", " + q(specialties[rng() % specialties.size()]) + ", " +
                            q(cities[rng() % cities.size()]) + ");");
    }
    const std::string dates[3] = {"2025-01-03", "2025-01-04", "2025-01-06"};
    auto slot_id = [](int p, int j) { return 3 * (p - 1) + j + 1; };
    std::map<int, std::string> hour;
    const std::set<int> taken = {slot_id(1, 0), slot_id(2, 0), slot_id(3, 0), slot_id(4, 1), slot_id(2, 1)};
    for (int p = 1; p <= 6; ++p)
        for (int j = 0; j < 3; ++j) {
            const int id = slot_id(p, j);
            const int h = uniform(rng, 9, 16);
            hour[id] = (h < 10 ? "0" : "") + std::to_string(h) + ":00";
            slots.push_back("INSERT INTO slots (id, provider_id, starts_at, duration_min, capacity, booked) VALUES (" +
                            std::to_string(id) + ", " + std::to_string(p) + ", '" + dates[j] + " " + hour[id] + ":00', " +
                            std::to_string(std::vector<int>{30, 45, 60}[rng() % 3]) + ", 1, " + (taken.count(id) ? "1" : "0") +
                            ");");
        }
    seed_table(a, "clients", "Four clients; client 1 is the acting user.", clients);
    seed_table(a, "providers", "Six providers.", providers);
    seed_table(a, "slots", "Three single-capacity slots per provider over three days.", slots);
    auto booking_row = [&](int id, int client, int slot, const std::string& status) {
        return "INSERT INTO bookings (id, client_id, slot_id, status, note, created_at) VALUES (" + std::to_string(id) + ", " +
               std::to_string(client) + ", " + std::to_string(slot) + ", " + q(status) + ", NULL, '2024-12-20 10:00:00');";
    };
    seed_table(a, "bookings", "Client 1 has three confirmed and one cancelled appointment.",
               {booking_row(1, 1, slot_id(1, 0), "confirmed"), booking_row(2, 1, slot_id(2, 0), "confirmed"),
                booking_row(3, 1, slot_id(1, 2), "cancelled"), booking_row(4, 2, slot_id(3, 0), "confirmed"),
                booking_row(5, 1, slot_id(4, 1), "confirmed"), booking_row(6, 3, slot_id(2, 1), "confirmed")});
    seed_table(a, "waitlist", "Clients 1 and 2 wait for the same full slot.",
               {"INSERT INTO waitlist (id, client_id, slot_id, joined_at) VALUES (1, 1, " + std::to_string(slot_id(2, 1)) +
                    ", '2024-12-22 08:00:00');",
                "INSERT INTO waitlist (id, client_id, slot_id, joined_at) VALUES (2, 2, " + std::to_string(slot_id(2, 1)) +
                    ", '2024-12-23 08:00:00');"});
    seed_table(a, "favorites", "One favorite provider each for clients 1 and 2.",
               {"INSERT INTO favorites (client_id, provider_id) VALUES (1, 1);",
                "INSERT INTO favorites (client_id, provider_id) VALUES (2, 4);"});

    const std::string others = "SELECT id, name, email, phone FROM clients WHERE id <> 1";
    const std::string other_bookings = "SELECT id, slot_id, status, note FROM bookings WHERE client_id <> 1";
    {
        const int s5 = slot_id(5, 1);
        SpecBuilder s;
        s.created("booking", "SELECT id FROM bookings WHERE client_id = 1 AND slot_id = " + std::to_string(s5) +
                             " AND status = 'confirmed'", "id");
        s.unchanged("other_bookings", other_bookings);
        add_task(a, "book-slot", "Book the " + hour[s5] + " slot with " + provider[5] + " on 2025-01-04.", s,
                 "A confirmed booking of slot " + std::to_string(s5) + " for client 1.", "No such booking.",
                 {{"search_providers", {{"query", provider[5]}}},
                  {"list_slots", {{"provider_id", 5}, {"date", "2025-01-04"}}},
                  {"book_slot", {{"slot_id", s5}}}},
                 "You are booked with " + provider[5] + " on 2025-01-04 at " + hour[s5] + ".");
    }
    {
        SpecBuilder s;
        s.equals("cancelled", "SELECT status FROM bookings WHERE id = 2", "cancelled");
        s.equals("others_kept", "SELECT COUNT(*) FROM bookings WHERE client_id = 1 AND status = 'confirmed' AND id <> 2", 2, true);
        add_task(a, "cancel-appointment", "Cancel my appointment with " + provider[2] + ".", s, "Booking 2 is cancelled.",
                 "Booking 2 still confirmed, or another appointment cancelled.",
                 {{"list_my_bookings", Json::object()}, {"cancel_booking", {{"booking_id", 2}}}},
                 "Your appointment with " + provider[2] + " is cancelled.");
    }
    {
        const int target = slot_id(1, 1);
        SpecBuilder s;
        s.equals("moved", "SELECT slot_id FROM bookings WHERE id = 1 AND status = 'confirmed'", target);
        s.unchanged("other_bookings", other_bookings);
        add_task(a, "reschedule", "Move my appointment with " + provider[1] + " to their slot on 2025-01-04 at " + hour[target] + ".",
                 s, "Booking 1 is on slot " + std::to_string(target) + ".", "Booking 1 not moved or cancelled instead.",
                 {{"list_my_bookings", Json::object()},
                  {"list_slots", {{"provider_id", 1}, {"date", "2025-01-04"}}},
                  {"reschedule_booking", {{"booking_id", 1}, {"slot_id", target}}}},
                 "Your appointment with " + provider[1] + " is now on 2025-01-04 at " + hour[target] + ".");
    }
    {
        const int full = slot_id(3, 0);
        SpecBuilder s;
        s.created("entry", "SELECT id FROM waitlist WHERE client_id = 1 AND slot_id = " + std::to_string(full), "id");
        s.unchanged("other_entries", "SELECT id, client_id, slot_id FROM waitlist WHERE client_id <> 1");
        add_task(a, "join-waitlist",
                 "The " + hour[full] + " slot with " + provider[3] + " on 2025-01-03 is full; put me on its waitlist.", s,
                 "Client 1 waits for slot " + std::to_string(full) + ".", "No waitlist entry.",
                 {{"list_slots", {{"provider_id", 3}, {"date", "2025-01-03"}}}, {"join_waitlist", {{"slot_id", full}}}},
                 "You are on the waitlist.");
    }
    {
        const int waited = slot_id(2, 1);
        SpecBuilder s;
        s.equals("left", "SELECT COUNT(*) FROM waitlist WHERE client_id = 1 AND slot_id = " + std::to_string(waited), 0);
        s.unchanged("other_entries", "SELECT id, client_id, slot_id FROM waitlist WHERE client_id <> 1");
        add_task(a, "leave-waitlist", "Take me off the waitlist for " + provider[2] + "'s slot on 2025-01-04.", s,
                 "Client 1 no longer waits for slot " + std::to_string(waited) + ".", "Entry still present.",
                 {{"list_my_waitlist", Json::object()}, {"leave_waitlist", {{"slot_id", waited}}}},
                 "You are off that waitlist.");
    }
    const std::vector<std::string> notes = {"Please use the side entrance", "Bring the referral letter",
                                            "Second visit for the same issue", "Prefer a quiet room"};
    const auto note = notes[rng() % notes.size()];
    {
        SpecBuilder s;
        s.equals("noted", "SELECT note FROM bookings WHERE id = 5", note);
        s.unchanged("other_bookings", "SELECT id, note FROM bookings WHERE id <> 5");
        add_task(a, "add-note", "Add the note \"" + note + "\" to my appointment with " + provider[4] + ".", s,
                 "Booking 5 carries the note.", "Note missing or added to another booking.",
                 {{"list_my_bookings", Json::object()}, {"set_booking_note", {{"booking_id", 5}, {"note", note}}}},
                 "The note is attached.");
    }
    {
        SpecBuilder s;
        s.created("favorite", "SELECT provider_id FROM favorites WHERE client_id = 1 AND provider_id = 5", "provider_id");
        s.unchanged("other_favorites", "SELECT client_id, provider_id FROM favorites WHERE provider_id <> 5");
        add_task(a, "favorite-provider", "Add " + provider[5] + " to my favorite providers.", s,
                 "Provider 5 is a favorite of client 1.", "Not saved.",
                 {{"search_providers", {{"query", provider[5]}}}, {"add_favorite", {{"provider_id", 5}}}},
                 provider[5] + " is now a favorite.");
    }
    const auto phone = "+31 20 555 0" + std::to_string(uniform(rng, 200, 999));
    {
        SpecBuilder s;
        s.equals("phone_updated", "SELECT phone FROM clients WHERE id = 1", phone);
        s.unchanged("other_clients", others);
        add_task(a, "update-phone", "Update my phone number to " + phone + ".", s, "Client 1 has phone " + phone + ".",
                 "Phone unchanged or another client modified.", {{"update_contact", {{"phone", phone}}}},
                 "Your phone number is now " + phone + ".");
    }
    {
        const int earliest = slot_id(6, 0);
        SpecBuilder s;
        s.created("booking", "SELECT id FROM bookings WHERE client_id = 1 AND slot_id = " + std::to_string(earliest) +
                             " AND status = 'confirmed'", "id");
        s.unchanged("other_bookings", other_bookings);
        add_task(a, "book-earliest", "Book the earliest open slot with " + provider[6] + ".", s,
                 "Client 1 holds slot " + std::to_string(earliest) + ".", "Another slot booked or none.",
                 {{"list_slots", {{"provider_id", 6}, {"open_only", true}}}, {"book_slot", {{"slot_id", earliest}}}},
                 "Booked " + provider[6] + " on 2025-01-03 at " + hour[earliest] + ".");
    }
    {
        SpecBuilder s;
        s.equals("day_cleared", "SELECT COUNT(*) FROM bookings b JOIN slots s ON s.id = b.slot_id WHERE b.client_id = 1 AND "
                                "b.status = 'confirmed' AND date(s.starts_at) = '2025-01-03'", 0);
        s.equals("later_kept", "SELECT status FROM bookings WHERE id = 5", "confirmed", true);
        add_task(a, "clear-day", "Cancel all my appointments on 2025-01-03.", s,
                 "Client 1 has no confirmed appointment on 2025-01-03.", "One remains, or a later one was cancelled.",
                 {{"list_my_bookings", Json::object()},
                  {"cancel_booking", {{"booking_id", 1}}},
                  {"cancel_booking", {{"booking_id", 2}}}},
                 "Both appointments on 2025-01-03 are cancelled.");
    }
    return a;
}

const std::vector<std::string> kFamilies = {"commerce", "lending", "booking"};

Artifacts build_family(const Scenario& scenario) {
    auto rng = rng_for(scenario.name);
    std::string family = scenario.category;
    if (std::find(kFamilies.begin(), kFamilies.end(), family) == kFamilies.end())
        family = kFamilies[std::stoull(sha256_hex(scenario.name).substr(16, 8), nullptr, 16) % kFamilies.size()];
    if (family == "commerce") return commerce(rng);
    if (family == "lending") return lending(rng);
    return booking(rng);
}

std::string defective(Stage stage) {
    switch (stage) {
        case Stage::Tasks: return "[{\"id\": \"task-1\", \"instruction\": ";
        case Stage::Schema: return "CREATE TABLE items (id INTEGER PRIMARY KEY, name TEXT NOT NULL REFERENCES);\n";
        case Stage::Seed: return "-- @table items\nINSERT INTO items (id, name) VALUES (1, 'first');\n";
        case Stage::Toolset:
        case Stage::Plans:
        case Stage::Verification: return "{\"broken\": ";
    }
    return {};
}

}  // namespace

TemplateBackend::TemplateBackend(TemplateOptions options) : options_(std::move(options)) {}

std::vector<std::string> TemplateBackend::families() { return kFamilies; }

std::vector<Scenario> TemplateBackend::example_scenarios() {
    auto sc = [](std::string name, std::string category, std::string description, std::string url) {
        return Scenario{std::move(name), std::move(url), std::move(description), std::move(category)};
    };
    return {
        sc("homeware-shop", "commerce", "An online homeware shop with a cart, checkout, saved addresses, wishlists and reviews.",
         "homeware.example.com"),
        sc("outdoor-gear-store", "commerce",
         "A store for camping and hiking equipment where customers fill a cart, order and review purchases.",
         "gear.example.com"),
        sc("kitchen-supply-market", "commerce", "A marketplace for cookware and pantry tools with order tracking.",
         "kitchen.example.com"),
        sc("city-library", "lending", "A public library where members borrow, renew and reserve books and settle fines.",
         "library.example.org"),
        sc("campus-library", "lending", "A university library lending course books with holds and overdue fines.",
         "campus-library.example.edu"),
        sc("community-book-exchange", "lending", "A volunteer lending collection with loans, renewals and reservations.",
         "books.example.net"),
        sc("health-clinic-booking", "booking", "A clinic appointment system with provider slots, waitlists and notes.",
         "clinic.example.com"),
        sc("salon-appointments", "booking", "A salon where clients book, move and cancel appointments with stylists.",
         "salon.example.com"),
        sc("tutor-scheduler", "booking", "A tutoring marketplace for booking lesson slots and favouriting tutors.",
         "tutors.example.com"),
    };
}

GenerationResult TemplateBackend::generate(const GenerationRequest& request) {
    const auto scenario = scenario_from_json(request.context.at("scenario"));
    if (const auto it = options_.faulty_attempts.find(request.stage);
        it != options_.faulty_attempts.end() && request.attempt <= it->second)
        return {defective(request.stage), 0.0};

    const auto a = build_family(scenario);
    switch (request.stage) {
        case Stage::Tasks: {
            const std::size_t k = request.context.value("k", std::size_t{10});
            Json tasks = Json::array();
            for (std::size_t i = 0; i < std::min(k, a.tasks.size()); ++i) tasks.push_back(a.tasks[i]);
            return {tasks.dump(2), 0.0};
        }
        case Stage::Schema: return {a.schema, 0.0};
        case Stage::Seed: return {seed_text(a.seed), 0.0};
        case Stage::Toolset: {
            Json out = Json::array();
            for (auto t : a.tools) {
                t.erase("plan");
                t.erase("response");
                out.push_back(t);
            }
            return {out.dump(2), 0.0};
        }
        case Stage::Plans: {
            Json out = Json::object();
            for (const auto& t : a.tools) out[t["name"].get<std::string>()] = {{"plan", t["plan"]}, {"response", t["response"]}};
            return {out.dump(2), 0.0};
        }
        case Stage::Verification: return {a.verification.dump(2), 0.0};
    }
    throw StageFailed(to_string(request.stage), "unknown stage");
}

}  // namespace awm
