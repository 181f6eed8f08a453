"""Writes component_pairs.jsonl from hand-decomposed SQL pairs.

Items are written as "kind:text". The F1 stored with each pair is the
multiset F1 of the hand-written items, computed here independently of the
Rust implementation.
"""
import json
from collections import Counter
from fractions import Fraction
from pathlib import Path

KINDS = {
    "S": "select_item", "F": "from_table", "J": "join_pair", "W": "where_pred",
    "G": "group_key", "H": "having_pred", "O": "order_key", "L": "limit_val",
    "U": "set_op", "A": "agg_func",
}

PAIRS = [
    ("SELECT a FROM t WHERE x = 1 AND y = 2", ["S:a", "F:t", "W:x = 1", "W:y = 2"],
     "SELECT a FROM t WHERE x = 1 AND y = 3", ["S:a", "F:t", "W:x = 1", "W:y = 3"]),
    ("SELECT name FROM singer", ["S:name", "F:singer"],
     "SELECT name FROM singer", ["S:name", "F:singer"]),
    ("SELECT name FROM singer", ["S:name", "F:singer"],
     "SELECT name, age FROM singer", ["S:name", "S:age", "F:singer"]),
    ("SELECT count(*) FROM singer", ["S:count(*)", "A:count", "F:singer"],
     "SELECT count(*) FROM concert", ["S:count(*)", "A:count", "F:concert"]),
    ("SELECT name FROM singer ORDER BY age DESC", ["S:name", "F:singer", "O:age desc"],
     "SELECT name FROM singer ORDER BY age", ["S:name", "F:singer", "O:age asc"]),
    ("SELECT name FROM singer ORDER BY age DESC LIMIT 1", ["S:name", "F:singer", "O:age desc", "L:1"],
     "SELECT name FROM singer ORDER BY age DESC LIMIT 3", ["S:name", "F:singer", "O:age desc", "L:3"]),
    ("SELECT DISTINCT country FROM singer", ["S:distinct", "S:country", "F:singer"],
     "SELECT country FROM singer", ["S:country", "F:singer"]),
    ("SELECT avg(age), max(age) FROM singer", ["S:avg(age)", "A:avg", "S:max(age)", "A:max", "F:singer"],
     "SELECT avg(age) FROM singer", ["S:avg(age)", "A:avg", "F:singer"]),
    ("SELECT country, count(*) FROM singer GROUP BY country", ["S:country", "S:count(*)", "A:count", "F:singer", "G:country"],
     "SELECT country, COUNT(*) FROM singer GROUP BY country", ["S:country", "S:count(*)", "A:count", "F:singer", "G:country"]),
    ("SELECT country, count(*) FROM singer GROUP BY country HAVING count(*) > 2",
     ["S:country", "S:count(*)", "A:count", "F:singer", "G:country", "H:count(*) > 2"],
     "SELECT country, count(*) FROM singer GROUP BY country", ["S:country", "S:count(*)", "A:count", "F:singer", "G:country"]),
    ("SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.id = T2.singer_id",
     ["S:t1.name", "F:singer as t1", "J:concert as t2|t1.id = t2.singer_id"],
     "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.id = T2.id",
     ["S:t1.name", "F:singer as t1", "J:concert as t2|t1.id = t2.id"]),
    ("SELECT name FROM singer WHERE age > 30", ["S:name", "F:singer", "W:age > 30"],
     "select NAME from SINGER where AGE > 30", ["S:name", "F:singer", "W:age > 30"]),
    ("SELECT name FROM singer WHERE age > 30", ["S:name", "F:singer", "W:age > 30"],
     "SELECT name FROM singer WHERE age >= 30", ["S:name", "F:singer", "W:age >= 30"]),
    ("SELECT name FROM singer WHERE country = 'France' AND age > 30", ["S:name", "F:singer", "W:country = 'france'", "W:age > 30"],
     "SELECT name FROM singer WHERE age > 30 AND country = 'France'", ["S:name", "F:singer", "W:age > 30", "W:country = 'france'"]),
    ("SELECT name FROM singer WHERE age BETWEEN 20 AND 30", ["S:name", "F:singer", "W:age between 20 and 30"],
     "SELECT name FROM singer WHERE age > 20 AND age < 30", ["S:name", "F:singer", "W:age > 20", "W:age < 30"]),
    ("SELECT name FROM singer WHERE id IN (SELECT singer_id FROM concert)",
     ["S:name", "F:singer", "W:id in (subquery)", "S:singer_id", "F:concert"],
     "SELECT name FROM singer", ["S:name", "F:singer"]),
    ("SELECT name FROM singer UNION SELECT name FROM actor", ["S:name", "F:singer", "U:union", "S:name", "F:actor"],
     "SELECT name FROM singer UNION ALL SELECT name FROM actor", ["S:name", "F:singer", "U:union all", "S:name", "F:actor"]),
    ("SELECT name FROM singer INTERSECT SELECT name FROM actor", ["S:name", "F:singer", "U:intersect", "S:name", "F:actor"],
     "SELECT name FROM singer", ["S:name", "F:singer"]),
    ("SELECT count(DISTINCT country) FROM singer", ["S:count(distinct country)", "A:count", "F:singer"],
     "SELECT count(country) FROM singer", ["S:count(country)", "A:count", "F:singer"]),
    ("SELECT name FROM singer WHERE name LIKE '%a%'", ["S:name", "F:singer", "W:name like '%a%'"],
     "SELECT name FROM singer WHERE name LIKE '%b%'", ["S:name", "F:singer", "W:name like '%b%'"]),
    ("SELECT name FROM singer WHERE age > 30 OR age < 20", ["S:name", "F:singer", "W:age > 30 or age < 20"],
     "SELECT name FROM singer WHERE age > 30", ["S:name", "F:singer", "W:age > 30"]),
    ("SELECT a, b, c FROM t", ["S:a", "S:b", "S:c", "F:t"],
     "SELECT c, b, a FROM t", ["S:c", "S:b", "S:a", "F:t"]),
    ("SELECT a FROM t LIMIT 10", ["S:a", "F:t", "L:10"],
     "SELECT a FROM t", ["S:a", "F:t"]),
    ("SELECT a FROM t ORDER BY b ASC, c DESC", ["S:a", "F:t", "O:b asc", "O:c desc"],
     "SELECT a FROM t ORDER BY b, c", ["S:a", "F:t", "O:b asc", "O:c asc"]),
    ("SELECT sum(price) FROM orders WHERE status = 'paid'", ["S:sum(price)", "A:sum", "F:orders", "W:status = 'paid'"],
     "SELECT SUM(price) FROM orders WHERE status = 'PAID'", ["S:sum(price)", "A:sum", "F:orders", "W:status = 'paid'"]),
    ("SELECT T2.name, count(*) FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id GROUP BY T1.stadium_id",
     ["S:t2.name", "S:count(*)", "A:count", "F:concert as t1", "J:stadium as t2|t1.stadium_id = t2.stadium_id", "G:t1.stadium_id"],
     "SELECT T2.name, count(*) FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id GROUP BY T2.name",
     ["S:t2.name", "S:count(*)", "A:count", "F:concert as t1", "J:stadium as t2|t1.stadium_id = t2.stadium_id", "G:t2.name"]),
    ("SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)",
     ["S:name", "F:singer", "W:age > (subquery)", "S:avg(age)", "A:avg", "F:singer"],
     "SELECT name FROM singer WHERE age > 30", ["S:name", "F:singer", "W:age > 30"]),
    ("SELECT a FROM t WHERE b IS NULL", ["S:a", "F:t", "W:b is null"],
     "SELECT a FROM t WHERE b IS NOT NULL", ["S:a", "F:t", "W:b is not null"]),
    ("SELECT a FROM t WHERE b NOT IN (1, 2, 3)", ["S:a", "F:t", "W:b not in (1, 2, 3)"],
     "SELECT a FROM t WHERE b NOT IN (1,2,3)", ["S:a", "F:t", "W:b not in (1, 2, 3)"]),
    ("SELECT max(a), min(a) FROM t", ["S:max(a)", "A:max", "S:min(a)", "A:min", "F:t"],
     "SELECT min(a), max(a) FROM t", ["S:min(a)", "A:min", "S:max(a)", "A:max", "F:t"]),
    ("SELECT a FROM t JOIN u ON t.id = u.tid JOIN v ON u.id = v.uid", ["S:a", "F:t", "J:u|t.id = u.tid", "J:v|u.id = v.uid"],
     "SELECT a FROM t JOIN u ON t.id = u.tid", ["S:a", "F:t", "J:u|t.id = u.tid"]),
    ("SELECT a FROM t, u WHERE t.id = u.id", ["S:a", "F:t", "F:u", "W:t.id = u.id"],
     "SELECT a FROM t JOIN u ON t.id = u.id", ["S:a", "F:t", "J:u|t.id = u.id"]),
    ("SELECT a FROM t", ["S:a", "F:t"],
     "SELECT b FROM u", ["S:b", "F:u"]),
    ("SELECT * FROM t", ["S:*", "F:t"],
     "SELECT * FROM t WHERE a = 1", ["S:*", "F:t", "W:a = 1"]),
    ("SELECT count(*) FROM t WHERE a = 1 AND b = 2 AND c = 3", ["S:count(*)", "A:count", "F:t", "W:a = 1", "W:b = 2", "W:c = 3"],
     "SELECT count(*) FROM t WHERE a = 1", ["S:count(*)", "A:count", "F:t", "W:a = 1"]),
    ("SELECT a, avg(b) FROM t GROUP BY a ORDER BY avg(b) DESC LIMIT 5",
     ["S:a", "S:avg(b)", "A:avg", "F:t", "G:a", "O:avg(b) desc", "L:5"],
     "SELECT a, avg(b) FROM t GROUP BY a ORDER BY avg(b) LIMIT 5",
     ["S:a", "S:avg(b)", "A:avg", "F:t", "G:a", "O:avg(b) asc", "L:5"]),
    ("SELECT a FROM t WHERE b = 1 UNION SELECT a FROM u WHERE b = 1",
     ["S:a", "F:t", "W:b = 1", "U:union", "S:a", "F:u", "W:b = 1"],
     "SELECT a FROM t UNION SELECT a FROM u", ["S:a", "F:t", "U:union", "S:a", "F:u"]),
    ("SELECT a FROM t EXCEPT SELECT a FROM u", ["S:a", "F:t", "U:except", "S:a", "F:u"],
     "SELECT a FROM t WHERE a NOT IN (SELECT a FROM u)", ["S:a", "F:t", "W:a not in (subquery)", "S:a", "F:u"]),
    ("SELECT name FROM people WHERE height > 180 ORDER BY name", ["S:name", "F:people", "W:height > 180", "O:name asc"],
     "SELECT name FROM people WHERE height > 180 ORDER BY name ASC", ["S:name", "F:people", "W:height > 180", "O:name asc"]),
    ("SELECT a FROM t GROUP BY a, b", ["S:a", "F:t", "G:a", "G:b"],
     "SELECT a FROM t GROUP BY b", ["S:a", "F:t", "G:b"]),
    ("SELECT a FROM t WHERE b > 1 GROUP BY a HAVING count(*) >= 3", ["S:a", "F:t", "W:b > 1", "G:a", "H:count(*) >= 3"],
     "SELECT a FROM t WHERE b > 1 GROUP BY a HAVING count(*) >= 2", ["S:a", "F:t", "W:b > 1", "G:a", "H:count(*) >= 2"]),
    ("SELECT T1.a FROM t AS T1 LEFT JOIN u AS T2 ON T1.id = T2.id WHERE T2.id IS NULL",
     ["S:t1.a", "F:t as t1", "J:u as t2|t1.id = t2.id", "W:t2.id is null"],
     "SELECT T1.a FROM t AS T1 JOIN u AS T2 ON T1.id = T2.id WHERE T2.id IS NULL",
     ["S:t1.a", "F:t as t1", "J:u as t2|t1.id = t2.id", "W:t2.id is null"]),
    ("SELECT name FROM singer WHERE age = 30", ["S:name", "F:singer", "W:age = 30"],
     "SELECT name FROM singer WHERE age = 30 LIMIT 1 OFFSET 2", ["S:name", "F:singer", "W:age = 30", "L:1 offset 2"]),
    ("SELECT a FROM t WHERE (b = 1 AND c = 2)", ["S:a", "F:t", "W:(b = 1 and c = 2)"],
     "SELECT a FROM t WHERE b = 1 AND c = 2", ["S:a", "F:t", "W:b = 1", "W:c = 2"]),
    ("SELECT upper(name) FROM t", ["S:upper(name)", "F:t"],
     "SELECT lower(name) FROM t", ["S:lower(name)", "F:t"]),
    ("SELECT a FROM t WHERE b = 'x' AND c = 'y' AND d = 'z'", ["S:a", "F:t", "W:b = 'x'", "W:c = 'y'", "W:d = 'z'"],
     "SELECT a FROM t WHERE b = 'x' AND c = 'q' AND e = 'z'", ["S:a", "F:t", "W:b = 'x'", "W:c = 'q'", "W:e = 'z'"]),
    ("SELECT count(*) FROM (SELECT a FROM t GROUP BY a)", ["S:count(*)", "A:count", "F:(subquery)", "S:a", "F:t", "G:a"],
     "SELECT count(DISTINCT a) FROM t", ["S:count(distinct a)", "A:count", "F:t"]),
    ("WITH c AS (SELECT a FROM t) SELECT a FROM c", ["S:a", "F:t", "S:a", "F:c"],
     "SELECT a FROM t", ["S:a", "F:t"]),
    ("SELECT a, b FROM t WHERE a = 1 ORDER BY b DESC LIMIT 1", ["S:a", "S:b", "F:t", "W:a = 1", "O:b desc", "L:1"],
     "SELECT b, a FROM t WHERE 1 = a ORDER BY b DESC LIMIT 1", ["S:b", "S:a", "F:t", "W:1 = a", "O:b desc", "L:1"]),
    ("SELECT name FROM singer", ["S:name", "F:singer"],
     "SELECT name FROM singer;", ["S:name", "F:singer"]),
]


def items(raw):
    out = []
    for r in raw:
        k, text = r.split(":", 1)
        out.append([KINDS[k], text])
    return out


def f1(gold, pred):
    g = Counter(map(tuple, gold))
    p = Counter(map(tuple, pred))
    overlap = sum((g & p).values())
    if not g and not p:
        return Fraction(1)
    if overlap == 0:
        return Fraction(0)
    precision = Fraction(overlap, sum(p.values()))
    recall = Fraction(overlap, sum(g.values()))
    return 2 * precision * recall / (precision + recall)


def main():
    assert len(PAIRS) == 50, len(PAIRS)
    lines = []
    for gold, gold_items, pred, pred_items in PAIRS:
        gi, pi = items(gold_items), items(pred_items)
        value = f1(gi, pi)
        lines.append(json.dumps({
            "gold": gold, "pred": pred,
            "gold_items": gi, "pred_items": pi,
            "f1": float(value), "f1_fraction": f"{value.numerator}/{value.denominator}",
        }))
    out = Path(__file__).with_name("component_pairs.jsonl")
    out.write_text("\n".join(lines) + "\n")
    assert any(l for l in lines if '"f1_fraction": "3/4"' in l)


if __name__ == "__main__":
    main()
