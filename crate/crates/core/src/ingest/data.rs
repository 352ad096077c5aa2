//! Likes, tags and corpus files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary implicit-feedback matrix stored as sorted per-user positive lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSet {
    num_items: usize,
    positives: Vec<Vec<u32>>,
    /// Original (file line) index of every retained user.
    source_user: Vec<usize>,
}

impl InteractionSet {
    /// Build from per-user item lists; lists are sorted and deduplicated.
    pub fn from_lists(num_items: usize, lists: Vec<Vec<u32>>) -> Result<Self> {
        let source_user = (0..lists.len()).collect();
        Self::with_sources(num_items, lists, source_user)
    }

    pub fn with_sources(
        num_items: usize,
        lists: Vec<Vec<u32>>,
        source_user: Vec<usize>,
    ) -> Result<Self> {
        assert_eq!(lists.len(), source_user.len(), "one source id per user");
        let mut positives = Vec::with_capacity(lists.len());
        for (u, mut items) in lists.into_iter().enumerate() {
            if let Some(&bad) = items.iter().find(|&&j| j as usize >= num_items) {
                return Err(Error::Range(format!(
                    "user {u} likes item {bad} but the corpus has {num_items} items"
                )));
            }
            items.sort_unstable();
            items.dedup();
            positives.push(items);
        }
        Ok(InteractionSet {
            num_items,
            positives,
            source_user,
        })
    }

    pub fn num_users(&self) -> usize {
        self.positives.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn positives(&self, user: usize) -> &[u32] {
        &self.positives[user]
    }

    pub fn all_positives(&self) -> &[Vec<u32>] {
        &self.positives
    }

    pub fn source_user(&self, user: usize) -> usize {
        self.source_user[user]
    }

    pub fn source_users(&self) -> &[usize] {
        &self.source_user
    }

    pub fn is_positive(&self, user: usize, item: u32) -> bool {
        self.positives[user].binary_search(&item).is_ok()
    }

    pub fn num_likes(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    /// Number of users who like each item.
    pub fn item_like_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items];
        for list in &self.positives {
            for &j in list {
                counts[j as usize] += 1;
            }
        }
        counts
    }

    /// Drop users with fewer than `min_likes` positives, keeping order.
    pub fn filter_min_likes(&self, min_likes: usize) -> Self {
        let (positives, source_user) = self
            .positives
            .iter()
            .zip(&self.source_user)
            .filter(|(p, _)| p.len() >= min_likes)
            .map(|(p, s)| (p.clone(), *s))
            .unzip();
        InteractionSet {
            num_items: self.num_items,
            positives,
            source_user,
        }
    }
}

/// Per-item tag lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    num_tags: usize,
    item_tags: Vec<Vec<u32>>,
    /// Original tag id of every retained tag.
    source_tag: Vec<u32>,
}

impl TagSet {
    pub fn empty(num_items: usize) -> Self {
        TagSet {
            num_tags: 0,
            item_tags: vec![Vec::new(); num_items],
            source_tag: Vec::new(),
        }
    }

    pub fn from_lists(num_tags: usize, mut item_tags: Vec<Vec<u32>>) -> Result<Self> {
        for (j, tags) in item_tags.iter_mut().enumerate() {
            if let Some(&bad) = tags.iter().find(|&&t| t as usize >= num_tags) {
                return Err(Error::Range(format!(
                    "item {j} has tag {bad} but only {num_tags} tags exist"
                )));
            }
            tags.sort_unstable();
            tags.dedup();
        }
        Ok(TagSet {
            num_tags,
            item_tags,
            source_tag: (0..num_tags as u32).collect(),
        })
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn num_items(&self) -> usize {
        self.item_tags.len()
    }

    pub fn tags(&self, item: usize) -> &[u32] {
        &self.item_tags[item]
    }

    pub fn has_tag(&self, item: usize, tag: u32) -> bool {
        self.item_tags[item].binary_search(&tag).is_ok()
    }

    pub fn source_tags(&self) -> &[u32] {
        &self.source_tag
    }

    pub(crate) fn set_source_tags(&mut self, source: Vec<u32>) {
        self.source_tag = source;
    }

    pub fn all_tags(&self) -> &[Vec<u32>] {
        &self.item_tags
    }

    /// Drop tags used on fewer than `min_items` items and re-densify the
    /// survivors in ascending order of their current id.
    pub fn filter_min_items(&self, min_items: usize) -> Self {
        let mut counts = vec![0usize; self.num_tags];
        for tags in &self.item_tags {
            for &t in tags {
                counts[t as usize] += 1;
            }
        }
        let mut remap = vec![None; self.num_tags];
        let mut source_tag = Vec::new();
        for (t, &c) in counts.iter().enumerate() {
            if c >= min_items {
                remap[t] = Some(source_tag.len() as u32);
                source_tag.push(self.source_tag[t]);
            }
        }
        let item_tags = self
            .item_tags
            .iter()
            .map(|tags| tags.iter().filter_map(|&t| remap[t as usize]).collect())
            .collect();
        TagSet {
            num_tags: source_tag.len(),
            item_tags,
            source_tag,
        }
    }
}

/// Parse one `count id₁ … id_count` line.
fn parse_counted_line(line: &str, lineno: usize) -> Result<Vec<u32>> {
    let mut fields = line.split_whitespace();
    let count: usize = fields
        .next()
        .ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "empty line".into(),
        })?
        .parse()
        .map_err(|_| Error::Parse {
            line: lineno,
            msg: "count is not a non-negative integer".into(),
        })?;
    let ids = fields
        .map(|f| {
            f.parse::<u32>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad id `{f}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if ids.len() != count {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("count says {count} ids but the line has {}", ids.len()),
        });
    }
    Ok(ids)
}

pub fn parse_likes(text: &str, num_items: usize, min_user_likes: usize) -> Result<InteractionSet> {
    let mut lists = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let ids = parse_counted_line(line, n + 1)?;
        if let Some(&bad) = ids.iter().find(|&&j| j as usize >= num_items) {
            return Err(Error::Range(format!(
                "line {}: item {bad} is outside the corpus of {num_items} items",
                n + 1
            )));
        }
        lists.push(ids);
    }
    Ok(InteractionSet::from_lists(num_items, lists)?.filter_min_likes(min_user_likes))
}

pub fn load_likes(path: &Path, num_items: usize, min_user_likes: usize) -> Result<InteractionSet> {
    parse_likes(&fs::read_to_string(path)?, num_items, min_user_likes)
}

pub fn parse_tags(text: &str, num_items: usize, min_tag_items: usize) -> Result<TagSet> {
    let mut item_tags = vec![Vec::new(); num_items];
    let mut max_tag = None;
    for (n, line) in text.lines().enumerate() {
        if n >= num_items {
            return Err(Error::Range(format!(
                "tags file has more lines than the corpus has items ({num_items})"
            )));
        }
        let ids = parse_counted_line(line, n + 1)?;
        max_tag = ids.iter().copied().chain(max_tag).max();
        item_tags[n] = ids;
    }
    let num_tags = max_tag.map_or(0, |m| m as usize + 1);
    Ok(TagSet::from_lists(num_tags, item_tags)?.filter_min_items(min_tag_items))
}

pub fn load_tags(path: &Path, num_items: usize, min_tag_items: usize) -> Result<TagSet> {
    parse_tags(&fs::read_to_string(path)?, num_items, min_tag_items)
}

/// Parse `item_id<TAB>text` lines; ids must cover `0..n` exactly once.
pub fn parse_corpus(text: &str) -> Result<Vec<String>> {
    let mut entries: Vec<Option<String>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let (id, body) = line.split_once('\t').ok_or(Error::Parse {
            line: n + 1,
            msg: "expected `item_id<TAB>text`".into(),
        })?;
        let id: usize = id.trim().parse().map_err(|_| Error::Parse {
            line: n + 1,
            msg: format!("bad item id `{id}`"),
        })?;
        if id >= entries.len() {
            entries.resize(id + 1, None);
        }
        if entries[id].replace(body.to_string()).is_some() {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("duplicate item id {id}"),
            });
        }
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| e.ok_or_else(|| Error::Range(format!("item id {i} missing from corpus"))))
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<String>> {
    parse_corpus(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn likes_threshold_and_dedup() {
        let text = "3 0 5 9\n5 0 1 2 3 4\n2 7 7\n";
        let set = parse_likes(text, 10, 5).unwrap();
        assert_eq!(set.num_users(), 1);
        assert_eq!(set.positives(0), &[0, 1, 2, 3, 4]);
        assert_eq!(set.source_user(0), 1);

        let all = parse_likes(text, 10, 1).unwrap();
        assert_eq!(all.positives(2), &[7]);
    }

    #[test]
    fn likes_errors() {
        match parse_likes("2 1\n", 10, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_likes("1 1\n2 1 4 5\n", 10, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_likes("1 10\n", 10, 1), Err(Error::Range(_))));
    }

    #[test]
    fn tag_threshold_boundary() {
        // tag 0 on 10 items, tag 1 on 9 items, item 10 only has tag 1
        let mut lines = Vec::new();
        for j in 0..11 {
            let mut t = Vec::new();
            if j < 10 {
                t.push(0);
            }
            if j >= 2 {
                t.push(1);
            }
            let ids: Vec<String> = t.iter().map(|x: &u32| x.to_string()).collect();
            lines.push(format!("{} {}", t.len(), ids.join(" ")));
        }
        let tags = parse_tags(&lines.join("\n"), 12, 10).unwrap();
        assert_eq!(tags.num_tags(), 1);
        assert_eq!(tags.source_tags(), &[0]);
        assert_eq!(tags.tags(0), &[0]);
        assert!(tags.tags(10).is_empty());
        // item without a line keeps an empty list
        assert!(tags.tags(11).is_empty());
        assert_eq!(tags.num_items(), 12);
    }

    #[test]
    fn filtering_is_idempotent() {
        let set = parse_likes("5 0 1 2 3 4\n1 3\n6 1 2 3 4 5 6\n", 8, 1).unwrap();
        let once = set.filter_min_likes(5);
        assert_eq!(once.filter_min_likes(5), once);

        let tags = TagSet::from_lists(3, vec![vec![0, 1], vec![0], vec![2, 0]]).unwrap();
        let once = tags.filter_min_items(2);
        assert_eq!(once.filter_min_items(2), once);
        assert_eq!(once.num_tags(), 1);
    }

    #[test]
    fn corpus_parsing() {
        let docs = parse_corpus("1\tsecond doc\n0\tfirst\tdoc\n").unwrap();
        assert_eq!(docs, vec!["first\tdoc", "second doc"]);
        assert!(parse_corpus("0\ta\n2\tc\n").is_err());
        assert!(parse_corpus("0\ta\n0\tb\n").is_err());
    }
}
