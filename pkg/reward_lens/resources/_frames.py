from typing import Any, Dict


def frames_body(s: Any, sp: Any) -> Dict[str, Any]:
    """Request body for a frame pair given as arrays, nested rows or flat lists."""
    return {
        "s": s.tolist() if hasattr(s, "tolist") else s,
        "sp": sp.tolist() if hasattr(sp, "tolist") else sp,
    }
