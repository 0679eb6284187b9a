"""HTTP API for the annotation review console.

Endpoints:
  GET  /items?status=pending&limit=n&offset=k   page of review items
  GET  /items/{id}                              one item
  GET  /items/{id}/image                        image bytes
  GET  /items/{id}/mask                         RLE JSON
  POST /items/{id}/verdict?force=true|false     {"verdict": .., "note": ..}
  GET  /report                                  accuracy per kind x model

Static frontend assets are served from / when a directory is supplied.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .review import ReviewStore, UnknownItem, VerdictConflict


def create_app(
    store: ReviewStore,
    images_dir: Optional[str | Path] = None,
    static_dir: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="annotation review", docs_url=None, redoc_url=None)
    images_root = Path(images_dir) if images_dir else None

    @app.get("/items")
    def list_items(
        status: Optional[str] = Query(default=None),
        limit: int = Query(default=50, ge=1, le=500),
        offset: int = Query(default=0, ge=0),
    ):
        if status is not None and status not in ("pending", "correct", "incorrect"):
            raise HTTPException(status_code=400, detail=f"bad status {status!r}")
        items, total = store.list_items(status=status, limit=limit, offset=offset)
        return {"items": [i.to_json() for i in items], "total": total, "offset": offset}

    @app.get("/items/{annotation_id}")
    def get_item(annotation_id: int):
        try:
            return store.get(annotation_id).to_json()
        except UnknownItem:
            raise HTTPException(status_code=404, detail="unknown item")

    @app.get("/items/{annotation_id}/image")
    def get_image(annotation_id: int):
        try:
            item = store.get(annotation_id)
        except UnknownItem:
            raise HTTPException(status_code=404, detail="unknown item")
        if images_root is None:
            raise HTTPException(status_code=404, detail="no images directory configured")
        path = (images_root / item.image_ref).resolve()
        if images_root.resolve() not in path.parents and path != images_root.resolve():
            raise HTTPException(status_code=400, detail="image path escapes images dir")
        if not path.exists():
            raise HTTPException(status_code=404, detail="image file missing")
        return FileResponse(path)

    @app.get("/items/{annotation_id}/mask")
    def get_mask(annotation_id: int):
        try:
            return store.get(annotation_id).rle.to_json()
        except UnknownItem:
            raise HTTPException(status_code=404, detail="unknown item")

    @app.post("/items/{annotation_id}/verdict")
    async def post_verdict(annotation_id: int, request: Request, force: bool = Query(default=False)):
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="body must be JSON")
        if not isinstance(body, dict) or body.get("verdict") not in ("correct", "incorrect"):
            raise HTTPException(status_code=400, detail="verdict must be correct|incorrect")
        note = body.get("note", "")
        if not isinstance(note, str):
            raise HTTPException(status_code=400, detail="note must be a string")
        try:
            item = store.record_verdict(annotation_id, body["verdict"], note, force=force)
        except UnknownItem:
            raise HTTPException(status_code=404, detail="unknown item")
        except VerdictConflict as exc:
            return JSONResponse(status_code=409, content={"detail": str(exc)})
        return item.to_json()

    @app.get("/report")
    def report():
        return store.report()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")
    return app


def serve(store: ReviewStore, images_dir=None, static_dir=None, port: int = 8731) -> None:
    import uvicorn

    app = create_app(store, images_dir=images_dir, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
