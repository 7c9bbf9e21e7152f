"""Blinded 12-landmark rating protocol: sessions, scores, aggregation.

Raters score the anatomical plausibility of segmentation outputs at 12
landmarks on a {0, 0.5, 1} scale, with tumour-infiltrated landmarks
excluded. Method identities are hidden behind per-case random alias
letters until the session is completed and revealed.
"""

from __future__ import annotations

import hashlib
import json
import string
from pathlib import Path

import numpy as np

from ..errors import ConflictError, ValidationError
from .store import RatingStore

LANDMARKS = (
    ("C", "Caudate"),
    ("I", "Insula"),
    ("IC", "Internal Capsule"),
    ("L", "Lentiform Nucleus"),
    ("M1", "Frontal operculum"),
    ("M2", "Anterior temporal lobe"),
    ("M3", "Posterior temporal lobe"),
    ("M4", "Anterior MCA"),
    ("M5", "Lateral MCA"),
    ("M6", "Posterior MCA"),
    ("BR", "Brainstem"),
    ("CE", "Cerebellum"),
)
LANDMARK_CODES = tuple(code for code, _ in LANDMARKS)

EXCLUDED = "excluded"
ALLOWED_VALUES = ("0", "0.5", "1", EXCLUDED)


def normalize_value(value) -> str:
    if isinstance(value, str):
        if value in ALLOWED_VALUES:
            return value
        try:
            value = float(value)
        except ValueError:
            raise ValidationError(f"score must be one of {ALLOWED_VALUES}, got {value!r}")
    if isinstance(value, (int, float)):
        for allowed in ("0", "0.5", "1"):
            if float(allowed) == float(value):
                return allowed
    raise ValidationError(f"score must be one of {ALLOWED_VALUES}, got {value!r}")


def load_rating_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"rating manifest not found: {path}")
    d = json.loads(path.read_text())
    if not d.get("cases"):
        raise ValidationError("rating manifest has no cases")
    if len(d.get("methods", [])) < 2:
        raise ValidationError("need at least 2 methods to compare")
    for case in d["cases"]:
        missing = set(d["methods"]) - set(case.get("predictions", {}))
        if missing:
            raise ValidationError(f"case {case['id']}: missing predictions {sorted(missing)}")
    d["base_dir"] = str(path.parent)
    return d


def session_id_for(rater: str, manifest: dict, seed) -> str:
    payload = json.dumps(
        {
            "rater": rater,
            "seed": seed,
            "cases": sorted(c["id"] for c in manifest["cases"]),
            "methods": sorted(manifest["methods"]),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def create_session(store: RatingStore, manifest: dict, rater: str, seed=None) -> dict:
    """Create (or idempotently return) a blinded session for one rater."""
    if not rater:
        raise ValidationError("rater id required")
    sid = session_id_for(rater, manifest, seed)
    existing = store.get_session(sid)
    if existing is not None:
        return blinded_view(existing, store)
    rng = np.random.default_rng(
        seed if seed is not None else int(hashlib.sha256(sid.encode()).hexdigest()[:8], 16)
    )
    methods = list(manifest["methods"])
    letters = string.ascii_uppercase[: len(methods)]
    case_order = [manifest["cases"][i]["id"] for i in rng.permutation(len(manifest["cases"]))]
    aliases = {}
    for cid in case_order:
        perm = rng.permutation(len(methods))
        aliases[cid] = {letters[k]: methods[perm[k]] for k in range(len(methods))}
    blob = {
        "rater": rater,
        "manifest_name": manifest.get("name", ""),
        "base_dir": manifest.get("base_dir", ""),
        "methods": methods,
        "case_order": case_order,
        "aliases": aliases,  # secret while the session is open
        "cases": {c["id"]: c for c in manifest["cases"]},
        "landmarks": [{"code": c, "name": n} for c, n in LANDMARKS],
    }
    store.insert_session(sid, rater, seed, blob)
    return blinded_view(store.get_session(sid), store)


def _items(blob) -> list[tuple[str, str]]:
    letters = string.ascii_uppercase[: len(blob["methods"])]
    return [(cid, a) for cid in blob["case_order"] for a in letters]


def _score_map(store, sid) -> dict[tuple[str, str, str], str]:
    return {
        (r["case_id"], r["alias"], r["landmark"]): r["value"]
        for r in store.scores(sid)
    }


def progress(session: dict, store: RatingStore) -> dict:
    blob = session["blob"]
    scored = _score_map(store, session["id"])
    items = _items(blob)
    done = sum(
        1
        for cid, a in items
        if all((cid, a, code) in scored for code in LANDMARK_CODES)
    )
    return {
        "items_total": len(items),
        "items_complete": done,
        "scores_total": len(items) * len(LANDMARK_CODES),
        "scores_recorded": len(scored),
    }


def blinded_view(session: dict, store: RatingStore) -> dict:
    """Serialisable session state with method identities withheld."""
    blob = session["blob"]
    return {
        "id": session["id"],
        "rater": session["rater"],
        "status": session["status"],
        "case_order": blob["case_order"],
        "aliases": string.ascii_uppercase[: len(blob["methods"])],
        "n_methods": len(blob["methods"]),
        "landmarks": blob["landmarks"],
        "progress": progress(session, store),
    }


def next_item(session: dict, store: RatingStore) -> dict | None:
    """First presentation-order item with unscored landmarks."""
    if session["status"] != "open":
        raise ConflictError("session is not open")
    blob = session["blob"]
    scored = _score_map(store, session["id"])
    for cid, alias in _items(blob):
        values = {code: scored.get((cid, alias, code)) for code in LANDMARK_CODES}
        if any(v is None for v in values.values()):
            case = blob["cases"][cid]
            return {
                "case": cid,
                "alias": alias,
                "landmarks": [
                    {"code": code, "name": name, "value": values[code]}
                    for code, name in LANDMARKS
                ],
                "n_slices": case.get("n_slices"),
                "progress": progress(session, store),
            }
    return None


def record_score(store: RatingStore, session_id: str, case: str, alias: str,
                 landmark: str, value) -> dict:
    session = store.get_session(session_id)
    if session is None:
        raise ValidationError(f"no such session {session_id}")
    if session["status"] != "open":
        raise ConflictError("session is closed")
    blob = session["blob"]
    if case not in blob["cases"]:
        raise ValidationError(f"unknown case {case}")
    if alias not in blob["aliases"][case]:
        raise ValidationError(f"unknown alias {alias}")
    if landmark not in LANDMARK_CODES:
        raise ValidationError(f"unknown landmark {landmark}")
    store.upsert_score(session_id, case, alias, landmark, normalize_value(value))
    return {"ok": True}


def complete_session(store: RatingStore, session_id: str) -> dict:
    session = store.get_session(session_id)
    if session is None:
        raise ValidationError(f"no such session {session_id}")
    if session["status"] != "open":
        raise ConflictError("session already completed")
    prog = progress(session, store)
    if prog["items_complete"] != prog["items_total"]:
        raise ConflictError(
            f"cannot complete: {prog['items_complete']}/{prog['items_total']} items scored"
        )
    store.set_status(session_id, session["version"], "complete")
    return blinded_view(store.get_session(session_id), store)


def reveal(store: RatingStore, session_id: str) -> dict:
    session = store.get_session(session_id)
    if session is None:
        raise ValidationError(f"no such session {session_id}")
    if session["status"] != "complete":
        raise ConflictError("cannot reveal an open session")
    store._audit(session_id, event="revealed")
    return {"id": session_id, "aliases": session["blob"]["aliases"]}


def _resolved_scores(store: RatingStore, session: dict) -> list[dict]:
    blob = session["blob"]
    out = []
    for r in store.scores(session["id"]):
        method = blob["aliases"][r["case_id"]][r["alias"]]
        out.append({**r, "method": method, "rater": session["rater"]})
    return out


def aggregate(store: RatingStore, session_ids: list[str]) -> dict:
    """Per method x landmark accuracy fractions plus rater agreement.

    Excluded landmarks leave the denominators. Agreement statistics are
    an extension beyond the original protocol and are marked as such.
    """
    sessions = []
    for sid in session_ids:
        s = store.get_session(sid)
        if s is None:
            raise ValidationError(f"no such session {sid}")
        if s["status"] != "complete":
            raise ConflictError(f"session {sid} is still open")
        sessions.append(s)

    rows = [r for s in sessions for r in _resolved_scores(store, s)]
    methods = sorted({r["method"] for r in rows})
    per_method: dict[str, dict] = {}
    for m in methods:
        m_rows = [r for r in rows if r["method"] == m]
        landmarks = {}
        for code in LANDMARK_CODES:
            vals = [r["value"] for r in m_rows if r["landmark"] == code]
            numeric = [float(v) for v in vals if v != EXCLUDED]
            n = len(numeric)
            landmarks[code] = {
                "n": n,
                "excluded": len(vals) - n,
                "mostly_accurate": (sum(1 for v in numeric if v >= 0.5) / n) if n else None,
                "highly_accurate": (sum(1 for v in numeric if v == 1.0) / n) if n else None,
            }
        numeric_all = [float(r["value"]) for r in m_rows if r["value"] != EXCLUDED]
        per_method[m] = {
            "landmarks": landmarks,
            "mean_score": float(np.mean(numeric_all)) if numeric_all else None,
            "n_scores": len(numeric_all),
            "n_excluded": len(m_rows) - len(numeric_all),
        }

    # across-rater agreement (extension: not part of the original protocol)
    by_rater: dict[str, dict] = {}
    for r in rows:
        key = (r["case_id"], r["method"], r["landmark"])
        by_rater.setdefault(r["rater"], {})[key] = r["value"]
    raters = sorted(by_rater)
    agreement = None
    if len(raters) >= 2:
        matches, diffs, total = 0, [], 0
        for i in range(len(raters)):
            for j in range(i + 1, len(raters)):
                common = set(by_rater[raters[i]]) & set(by_rater[raters[j]])
                for key in common:
                    a, b = by_rater[raters[i]][key], by_rater[raters[j]][key]
                    total += 1
                    matches += a == b
                    if a != EXCLUDED and b != EXCLUDED:
                        diffs.append(abs(float(a) - float(b)))
        agreement = {
            "items_compared": total,
            "exact_match_fraction": matches / total if total else None,
            "mean_abs_difference": float(np.mean(diffs)) if diffs else None,
            "note": "agreement statistics are an extension to the original protocol",
        }

    return {
        "sessions": [s["id"] for s in sessions],
        "raters": raters,
        "methods": per_method,
        "agreement": agreement,
    }


def export_csv_rows(store: RatingStore, session_ids: list[str]) -> list[tuple]:
    rows = [("session", "rater", "case", "alias", "landmark", "value", "timestamp")]
    for sid in session_ids:
        session = store.get_session(sid)
        if session is None:
            raise ValidationError(f"no such session {sid}")
        for r in sorted(
            store.scores(sid), key=lambda r: (r["case_id"], r["alias"], r["landmark"])
        ):
            rows.append(
                (sid, session["rater"], r["case_id"], r["alias"], r["landmark"],
                 r["value"], r["updated_at"])
            )
    return rows
