"""Record-file loading, post-set assembly, and verdict labeling.

Input corpora are five plain JSONL files (fact-checks, tweets, comments,
reposts, users). Malformed or contract-violating lines are quarantined with
a reason instead of crashing the run; every input line ends up either in a
typed record or in the quarantine list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import json

from .fileio import DataError, atomic_write, make_header, read_jsonl, write_jsonl

# class indices are positional in this list and fixed across the pipeline
VERDICT_CLASSES = ["False", "Pants on Fire", "Half True", "Mostly False", "Mostly True"]

_VERDICT_BY_KEY = {c.lower(): i for i, c in enumerate(VERDICT_CLASSES)}
# out-of-model verdicts that are recognized but rejected
_KNOWN_FOREIGN_VERDICTS = {"true"}


def normalize_verdict(text: str) -> int | None:
    """Map a verdict string to a class index, or None when out of model."""
    key = re.sub(r"[-_\s]+", " ", str(text).strip().lower())
    return _VERDICT_BY_KEY.get(key)


_TWEET_ID_RE = re.compile(r"/status(?:es)?/(\d+)")


def extract_tweet_id(value) -> str | None:
    """Pull a numeric tweet id out of a raw id, digit string, or status URL."""
    if value is None:
        return None
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return str(value)
    s = str(value).strip()
    if not s:
        return None
    if s.isdigit():
        return s
    m = _TWEET_ID_RE.search(s)
    return m.group(1) if m else None


def parse_timestamp(value) -> int:
    """Normalize epoch numbers or ISO-8601 strings to UTC epoch seconds."""
    if isinstance(value, bool) or value is None:
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    s = str(value).strip()
    if not s:
        raise ValueError("empty timestamp")
    if s.isdigit():
        return int(s)
    try:
        dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValueError(f"unparseable date: {s!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def repost_node_id(post_id: str, user_id: str) -> str:
    """Synthetic node id for a repost, which has no tweet id of its own."""
    return f"rt:{post_id}:{user_id}"


# ---------------------------------------------------------------------------
# records

@dataclass
class FactCheckRecord:
    verdict: str
    class_idx: int
    statement: str
    translate_twitter_links: list[str]
    line_no: int = -1


@dataclass
class TweetRecord:
    id: str
    timestamp: int
    user_id: str
    text: str
    quote_parent: str | None = None  # in-corpus candidacy checked at join
    line_no: int = -1


@dataclass
class CommentRecord:
    comment_id: str
    post_id: str
    reply_post_id: str
    user_id: str
    text: str
    timestamp: int
    line_no: int = -1


@dataclass
class RepostRecord:
    post_id: str
    user_id: str
    line_no: int = -1


@dataclass
class UserRecord:
    id: str
    username: str = ""
    line_no: int = -1


@dataclass
class QuarantineEntry:
    line_no: int
    reason: str
    file: str = ""

    def to_dict(self) -> dict:
        return {"file": self.file, "line_no": self.line_no, "reason": self.reason}


@dataclass
class RawCorpus:
    factchecks: list[FactCheckRecord] = field(default_factory=list)
    tweets: dict[str, TweetRecord] = field(default_factory=dict)
    comments: dict[str, CommentRecord] = field(default_factory=dict)
    reposts: list[RepostRecord] = field(default_factory=list)
    users: dict[str, UserRecord] = field(default_factory=dict)
    quarantine: list[QuarantineEntry] = field(default_factory=list)
    duplicates: int = 0
    unresolved_user_refs: int = 0

    def summary(self) -> dict:
        return {
            "factchecks": len(self.factchecks),
            "tweets": len(self.tweets),
            "comments": len(self.comments),
            "reposts": len(self.reposts),
            "users": len(self.users),
            "quarantined": len(self.quarantine),
            "duplicates": self.duplicates,
            "unresolved_user_refs": self.unresolved_user_refs,
        }


def _as_id(value) -> str:
    if value is None or isinstance(value, bool):
        raise ValueError(f"not an id: {value!r}")
    s = str(value).strip()
    if not s or s.lower() in ("none", "null"):
        raise ValueError(f"not an id: {value!r}")
    return s


def _iter_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield n, line


def load_corpus(paths: Mapping[str, str | Path]) -> RawCorpus:
    """Load the five record files; bad lines go to corpus.quarantine.

    paths keys: factchecks, tweets, comments, reposts, users.
    Duplicate ids keep the first occurrence. The returned corpus is treated
    as immutable by later stages.
    """
    required = ("factchecks", "tweets", "comments", "reposts", "users")
    for key in required:
        if key not in paths:
            raise DataError(f"corpus paths missing '{key}'")
        if not Path(paths[key]).is_file():
            raise DataError(f"missing file: {paths[key]}")

    corpus = RawCorpus()

    def bad(kind: str, line_no: int, reason: str) -> None:
        corpus.quarantine.append(QuarantineEntry(line_no=line_no, reason=reason, file=kind))

    def rows(kind: str):
        for line_no, line in _iter_lines(Path(paths[kind])):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                bad(kind, line_no, f"invalid JSON: {exc.msg}")
                continue
            if not isinstance(obj, dict):
                bad(kind, line_no, "line is not a JSON object")
                continue
            yield line_no, obj

    for line_no, obj in rows("factchecks"):
        try:
            verdict = str(obj["verdict"]).strip()
        except KeyError:
            bad("factchecks", line_no, "missing verdict")
            continue
        cls = normalize_verdict(verdict)
        if cls is None:
            kind = "out-of-model" if verdict.lower() in _KNOWN_FOREIGN_VERDICTS else "unknown"
            bad("factchecks", line_no, f"{kind} verdict: {verdict!r}")
            continue
        links = obj.get("translate_twitter_links") or []
        if isinstance(links, str):
            links = [links]
        if not isinstance(links, list):
            bad("factchecks", line_no, "translate_twitter_links is not a list")
            continue
        corpus.factchecks.append(FactCheckRecord(
            verdict=verdict, class_idx=cls,
            statement=str(obj.get("statement", "")),
            translate_twitter_links=[str(x) for x in links],
            line_no=line_no))

    for line_no, obj in rows("tweets"):
        try:
            tid = _as_id(obj["id"])
            ts = parse_timestamp(obj["date"])
            uid = _as_id(obj.get("user_id", "0"))
        except (KeyError, ValueError) as exc:
            bad("tweets", line_no, f"bad tweet record: {exc}")
            continue
        if tid in corpus.tweets:
            corpus.duplicates += 1
            continue
        quote_parent = extract_tweet_id(obj.get("quoted")) or extract_tweet_id(obj.get("quote_url"))
        corpus.tweets[tid] = TweetRecord(
            id=tid, timestamp=ts, user_id=uid,
            text=str(obj.get("tweet", "") or ""),
            quote_parent=quote_parent, line_no=line_no)

    for line_no, obj in rows("comments"):
        try:
            cid = _as_id(obj["comment_id"])
            pid = _as_id(obj["post_id"])
            ts = parse_timestamp(obj["date"])
            uid = _as_id(obj.get("user_id", "0"))
        except (KeyError, ValueError) as exc:
            bad("comments", line_no, f"bad comment record: {exc}")
            continue
        if cid in corpus.comments:
            corpus.duplicates += 1
            continue
        reply_to = obj.get("reply_post_id")
        try:
            reply_post_id = _as_id(reply_to) if reply_to not in (None, "") else pid
        except ValueError:
            reply_post_id = pid
        corpus.comments[cid] = CommentRecord(
            comment_id=cid, post_id=pid, reply_post_id=reply_post_id,
            user_id=uid, text=str(obj.get("comment", "") or ""),
            timestamp=ts, line_no=line_no)

    seen_reposts: set[tuple[str, str]] = set()
    for line_no, obj in rows("reposts"):
        try:
            pid = _as_id(obj["post_id"])
            uid = _as_id(obj["user_id"])
        except (KeyError, ValueError) as exc:
            bad("reposts", line_no, f"bad repost record: {exc}")
            continue
        key = (pid, uid)
        if key in seen_reposts:
            corpus.duplicates += 1
            continue
        seen_reposts.add(key)
        if pid not in corpus.tweets:
            bad("reposts", line_no, f"repost of unknown tweet {pid}")
            continue
        corpus.reposts.append(RepostRecord(post_id=pid, user_id=uid, line_no=line_no))

    for line_no, obj in rows("users"):
        try:
            uid = _as_id(obj["id"])
        except (KeyError, ValueError) as exc:
            bad("users", line_no, f"bad user record: {exc}")
            continue
        if uid in corpus.users:
            corpus.duplicates += 1
            continue
        corpus.users[uid] = UserRecord(id=uid, username=str(obj.get("username", "")),
                                       line_no=line_no)

    for t in corpus.tweets.values():
        if t.user_id not in corpus.users:
            corpus.unresolved_user_refs += 1
    for c in corpus.comments.values():
        if c.user_id not in corpus.users:
            corpus.unresolved_user_refs += 1
    for r in corpus.reposts:
        if r.user_id not in corpus.users:
            corpus.unresolved_user_refs += 1
    return corpus


# ---------------------------------------------------------------------------
# post sets

@dataclass
class PostMember:
    id: str
    parent_id: str
    kind: str  # "reply" | "retweet"
    timestamp: int
    text: str

    def to_dict(self) -> dict:
        return {"id": self.id, "parent_id": self.parent_id, "kind": self.kind,
                "ts": self.timestamp, "text": self.text}


@dataclass
class PostSet:
    source_id: str
    source_timestamp: int
    source_text: str
    members: list[PostMember] = field(default_factory=list)
    label: int | None = None

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "source_ts": self.source_timestamp,
                "source_text": self.source_text, "label": self.label,
                "members": [m.to_dict() for m in self.members]}


@dataclass
class JoinResult:
    post_sets: list[PostSet]
    quarantine: list[QuarantineEntry]


def join_post_sets(corpus: RawCorpus) -> JoinResult:
    """Group responsive tweets, comments, and reposts under their sources.

    A tweet is a source iff it has no in-corpus quote parent. Members are
    ordered by (timestamp, id); reposts inherit the reposted tweet's
    timestamp. Output is independent of input line order. Threads with a
    cyclic reply chain reject the whole post set.
    """
    tweets = corpus.tweets
    quarantine: list[QuarantineEntry] = []

    tweet_parent: dict[str, str] = {}
    tweet_children: dict[str, list[str]] = {}
    for t in tweets.values():
        qp = t.quote_parent
        if qp and qp != t.id and qp in tweets:
            tweet_parent[t.id] = qp
            tweet_children.setdefault(qp, []).append(t.id)

    # resolve each comment's chain to its root tweet; memoized walk
    comment_root: dict[str, str | None] = {}
    rejected_threads: set[str] = set()

    def resolve_root(cid: str) -> str | None:
        path: list[str] = []
        cur = cid
        seen: set[str] = set()
        while True:
            if cur in comment_root:
                root = comment_root[cur]
                break
            if cur in seen:
                for p in path:
                    comment_root[p] = None
                    quarantine.append(QuarantineEntry(
                        line_no=corpus.comments[p].line_no,
                        reason=f"cyclic reply chain involving comment {cur}",
                        file="comments"))
                rejected_threads.add(corpus.comments[cid].post_id)
                return None
            seen.add(cur)
            path.append(cur)
            target = corpus.comments[cur].reply_post_id
            if target in tweets:
                root = target
                break
            if target in corpus.comments:
                cur = target
                continue
            # unresolvable: orphan the whole walked prefix
            for p in path:
                comment_root[p] = None
                quarantine.append(QuarantineEntry(
                    line_no=corpus.comments[p].line_no,
                    reason=f"unresolvable reply_post_id {target!r}",
                    file="comments"))
            return None
        for p in path:
            comment_root[p] = root
        return root

    comment_children: dict[str, list[str]] = {}  # parent id (tweet or comment) -> cids
    for cid in corpus.comments:
        root = resolve_root(cid)
        if root is None:
            continue
        c = corpus.comments[cid]
        if root != c.post_id:
            comment_root[cid] = None
            quarantine.append(QuarantineEntry(
                line_no=c.line_no,
                reason=f"reply chain roots at tweet {root}, not post_id {c.post_id}",
                file="comments"))
            continue
        comment_children.setdefault(c.reply_post_id, []).append(cid)

    reposts_by_tweet: dict[str, list[RepostRecord]] = {}
    for r in corpus.reposts:
        reposts_by_tweet.setdefault(r.post_id, []).append(r)

    sources = sorted((t for t in tweets.values() if t.id not in tweet_parent),
                     key=lambda t: t.id)

    post_sets: list[PostSet] = []
    for src in sources:
        members: list[PostMember] = []
        dropped = False

        def attach_comments(parent_id: str, parent_ts: int) -> None:
            for cid in comment_children.get(parent_id, ()):
                c = corpus.comments[cid]
                if c.timestamp < parent_ts:
                    quarantine.append(QuarantineEntry(
                        line_no=c.line_no,
                        reason=f"comment {cid} predates its parent {parent_id}",
                        file="comments"))
                    continue
                members.append(PostMember(id=cid, parent_id=parent_id, kind="reply",
                                          timestamp=c.timestamp, text=c.text))
                attach_comments(cid, c.timestamp)

        def attach_tweet(tid: str) -> None:
            t = tweets[tid]
            attach_comments(tid, t.timestamp)
            for r in reposts_by_tweet.get(tid, ()):
                members.append(PostMember(id=repost_node_id(r.post_id, r.user_id),
                                          parent_id=tid, kind="retweet",
                                          timestamp=t.timestamp, text=""))
            for child_tid in tweet_children.get(tid, ()):
                ct = tweets[child_tid]
                if ct.timestamp < t.timestamp:
                    quarantine.append(QuarantineEntry(
                        line_no=ct.line_no,
                        reason=f"quote tweet {child_tid} predates its parent {tid}",
                        file="tweets"))
                    continue
                members.append(PostMember(id=child_tid, parent_id=tid, kind="retweet",
                                          timestamp=ct.timestamp, text=ct.text))
                attach_tweet(child_tid)

        attach_tweet(src.id)
        member_tweet_ids = {src.id} | {m.id for m in members}
        if member_tweet_ids & rejected_threads:
            quarantine.append(QuarantineEntry(
                line_no=src.line_no,
                reason=f"post set {src.id} rejected: cyclic reply chain",
                file="tweets"))
            dropped = True
        if dropped:
            continue
        members.sort(key=lambda m: (m.timestamp, m.id))
        post_sets.append(PostSet(source_id=src.id, source_timestamp=src.timestamp,
                                 source_text=src.text, members=members))
    return JoinResult(post_sets=post_sets, quarantine=quarantine)


@dataclass
class LabelResult:
    post_sets: list[PostSet]
    quarantine: list[QuarantineEntry]
    matched: int = 0
    unparsed_links: int = 0


def label_post_sets(post_sets: list[PostSet],
                    factchecks: Iterable[FactCheckRecord]) -> LabelResult:
    """Attach verdict class indices to post sets by source tweet id.

    Unmatched sets stay unlabeled (label None). A source claimed by several
    distinct verdicts is rejected with a conflict entry.
    """
    claims: dict[str, set[int]] = {}
    lines: dict[str, list[int]] = {}
    unparsed = 0
    for fc in factchecks:
        for link in fc.translate_twitter_links:
            tid = extract_tweet_id(link)
            if tid is None:
                unparsed += 1
                continue
            claims.setdefault(tid, set()).add(fc.class_idx)
            lines.setdefault(tid, []).append(fc.line_no)

    out: list[PostSet] = []
    quarantine: list[QuarantineEntry] = []
    matched = 0
    for ps in post_sets:
        classes = claims.get(ps.source_id)
        if not classes:
            out.append(PostSet(ps.source_id, ps.source_timestamp, ps.source_text,
                               ps.members, label=None))
            continue
        if len(classes) > 1:
            names = sorted(VERDICT_CLASSES[i] for i in classes)
            quarantine.append(QuarantineEntry(
                line_no=min(lines[ps.source_id]),
                reason=f"conflicting verdicts for source {ps.source_id}: {names}",
                file="factchecks"))
            continue
        matched += 1
        out.append(PostSet(ps.source_id, ps.source_timestamp, ps.source_text,
                           ps.members, label=next(iter(classes))))
    return LabelResult(post_sets=out, quarantine=quarantine, matched=matched,
                       unparsed_links=unparsed)


# ---------------------------------------------------------------------------
# artifact io

POST_SETS_FORMAT = "post-sets"
QUARANTINE_FORMAT = "quarantine"


def write_post_sets(path: str | Path, post_sets: list[PostSet],
                    config: dict | None = None) -> None:
    write_jsonl(path, (ps.to_dict() for ps in post_sets),
                header=make_header(POST_SETS_FORMAT, config))


def read_post_sets(path: str | Path) -> list[PostSet]:
    _, rows = read_jsonl(path, expect_format=POST_SETS_FORMAT)
    out = []
    for row in rows:
        try:
            members = [PostMember(id=str(m["id"]), parent_id=str(m["parent_id"]),
                                  kind=str(m["kind"]), timestamp=int(m["ts"]),
                                  text=str(m.get("text", "")))
                       for m in row["members"]]
            out.append(PostSet(source_id=str(row["source_id"]),
                               source_timestamp=int(row["source_ts"]),
                               source_text=str(row.get("source_text", "")),
                               members=members,
                               label=None if row.get("label") is None else int(row["label"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: bad post-set row: {exc}") from exc
    return out


def write_quarantine(path: str | Path, entries: list[QuarantineEntry],
                     config: dict | None = None) -> None:
    write_jsonl(path, (e.to_dict() for e in entries),
                header=make_header(QUARANTINE_FORMAT, config))
