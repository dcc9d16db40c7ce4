"""WebSocket front end: the same session cycle over /stream, plus static
files for the browser viewer.

Each websocket message carries exactly the bytes one TCP send would have
carried, so the two transports are byte-identical frame for frame. The sync
SessionDriver runs in a worker thread; two queues bridge it to the event
loop."""

from __future__ import annotations

import asyncio
import logging
import queue
import threading
from pathlib import Path

import uvicorn
from fastapi import FastAPI, WebSocket
from fastapi.staticfiles import StaticFiles
from starlette.websockets import WebSocketDisconnect

log = logging.getLogger("thermocast.web")


class WsTransport:
    """Sync transport facade over an async websocket."""

    def __init__(self, loop: asyncio.AbstractEventLoop):
        self.loop = loop
        self.inbox: queue.Queue = queue.Queue()
        self.outbox: asyncio.Queue = asyncio.Queue()
        self._closed = threading.Event()

    # driver-thread side
    def send(self, data: bytes) -> None:
        if self._closed.is_set():
            raise ConnectionError("websocket closed")
        asyncio.run_coroutine_threadsafe(self.outbox.put(data), self.loop).result(10)

    def recv(self, timeout: float):
        try:
            return self.inbox.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        if not self._closed.is_set():
            self._closed.set()
            asyncio.run_coroutine_threadsafe(self.outbox.put(None), self.loop)

    # event-loop side
    def push(self, data: bytes) -> None:
        self.inbox.put(data)


def build_app(server) -> FastAPI:
    """FastAPI app bound to a StreamServer: /stream plus optional static
    viewer files at the root."""
    app = FastAPI(title="thermocast")

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        loop = asyncio.get_running_loop()
        transport = WsTransport(loop)
        client = ws.client or ("?", 0)
        name = f"ws:{client[0]}:{client[1]}"
        driver = asyncio.create_task(
            asyncio.to_thread(server.serve_transport, transport, name)
        )

        async def pump_out():
            while True:
                data = await transport.outbox.get()
                if data is None:
                    break
                await ws.send_bytes(data)

        out_task = asyncio.create_task(pump_out())

        async def close_when_done():
            await asyncio.shield(driver)
            try:
                await ws.close()
            except Exception:
                pass

        closer = asyncio.create_task(close_when_done())
        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                data = message.get("bytes")
                if data is None:
                    # Text frames are not part of the protocol; feed the raw
                    # bytes so the decoder rejects them uniformly.
                    data = (message.get("text") or "").encode()
                transport.push(data)
        except WebSocketDisconnect:
            pass
        finally:
            transport.push(b"")
            await driver
            transport.close()
            await out_task
            closer.cancel()

    static_dir = server.config.server.static_dir
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="viewer")
        log.info("serving viewer from %s", static_dir)
    return app


class WebHandle:
    def __init__(self, uv_server: uvicorn.Server, thread: threading.Thread):
        self._server = uv_server
        self._thread = thread

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=5)


def start_web(server) -> WebHandle:
    app = build_app(server)
    uv_config = uvicorn.Config(
        app,
        host=server.config.server.host,
        port=server.config.server.web_port,
        log_level="warning",
    )
    uv_server = uvicorn.Server(uv_config)
    thread = threading.Thread(target=uv_server.run, name="web", daemon=True)
    thread.start()
    log.info(
        "serving websocket on ws://%s:%d/stream",
        server.config.server.host, server.config.server.web_port,
    )
    return WebHandle(uv_server, thread)
