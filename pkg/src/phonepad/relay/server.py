"""Network front end for the relay core.

Two listeners share one core: a TCP listener carrying newline-delimited
frames, and a WebSocket listener (one frame per message) for browser
pages. Everything runs on a single asyncio loop, so core mutations are
naturally serialized. Idle connections are swept once per second.

CLI flags / environment:
    --listen ADDR:PORT          PHONEPAD_LISTEN       (default 127.0.0.1:8765)
    --ws-listen ADDR:PORT       PHONEPAD_WS_LISTEN    (default 127.0.0.1:8766)
    --idle-timeout-ms N         PHONEPAD_IDLE_MS      (default 5000)
    --http-dir DIR --http PORT  serve static controller pages (optional)
"""
from __future__ import annotations

import argparse
import asyncio
import functools
import logging
import os
import time

from .core import RelayCore

logger = logging.getLogger(__name__)

MAX_FRAME_BYTES = 64 * 1024

_CLOSE = object()


class _QueueConn:
    """Connection handle with an outbound queue drained by a writer task.

    send_text never blocks the core; backpressure is absorbed by the
    queue and the transport's own flow control in the writer task.
    """

    def __init__(self, label: str):
        self.label = label
        self.outbox: asyncio.Queue = asyncio.Queue()
        self.closed = False

    def send_text(self, frame: str) -> None:
        if not self.closed:
            self.outbox.put_nowait(frame)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self.outbox.put_nowait(_CLOSE)


class RelayServer:
    def __init__(self, core: RelayCore, host: str = "127.0.0.1", port: int = 8765,
                 ws_host: str | None = None, ws_port: int | None = None,
                 sweep_interval_ms: int = 1000):
        self.core = core
        self.host, self.port = host, port
        self.ws_host, self.ws_port = ws_host, ws_port
        self.sweep_interval_ms = sweep_interval_ms
        self._t0 = time.monotonic()
        self._tcp_server: asyncio.AbstractServer | None = None
        self._ws_server = None
        self._sweep_task: asyncio.Task | None = None

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    async def start(self) -> None:
        self._tcp_server = await asyncio.start_server(
            self._handle_tcp, self.host, self.port, limit=MAX_FRAME_BYTES)
        self.port = self._tcp_server.sockets[0].getsockname()[1]
        if self.ws_port is not None:
            import websockets
            self._ws_server = await websockets.serve(
                self._handle_ws, self.ws_host or self.host, self.ws_port,
                max_size=MAX_FRAME_BYTES)
            self.ws_port = next(iter(self._ws_server.sockets)).getsockname()[1]
        self._sweep_task = asyncio.create_task(self._sweep_loop())
        logger.info("relay listening on tcp://%s:%s%s", self.host, self.port,
                    f" ws://{self.ws_host or self.host}:{self.ws_port}" if self._ws_server else "")

    async def stop(self) -> None:
        if self._sweep_task:
            self._sweep_task.cancel()
        if self._tcp_server:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._ws_server:
            self._ws_server.close()
            await self._ws_server.wait_closed()

    async def _sweep_loop(self) -> None:
        while True:
            await asyncio.sleep(self.sweep_interval_ms / 1000.0)
            self.core.sweep_disconnects(self.now_ms())

    async def _handle_tcp(self, reader: asyncio.StreamReader,
                          writer: asyncio.StreamWriter) -> None:
        conn = _QueueConn(label=str(writer.get_extra_info("peername")))
        self.core.on_open(conn, self.now_ms())
        writer_task = asyncio.create_task(self._tcp_writer(conn, writer))
        try:
            while True:
                try:
                    line = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    break  # oversized frame; drop the connection
                if not line:
                    break
                self.core.on_frame(conn, line.decode("utf-8", "replace").rstrip("\n"),
                                   self.now_ms())
        except (ConnectionError, asyncio.CancelledError):
            pass
        finally:
            self.core.on_close(conn, self.now_ms())
            conn.close()
            await writer_task

    async def _tcp_writer(self, conn: _QueueConn, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                item = await conn.outbox.get()
                if item is _CLOSE:
                    break
                writer.write(item.encode("utf-8") + b"\n")
                if conn.outbox.empty():
                    await writer.drain()
        except ConnectionError:
            pass
        finally:
            try:
                writer.close()
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    async def _handle_ws(self, websocket) -> None:
        import websockets
        conn = _QueueConn(label=str(websocket.remote_address))
        self.core.on_open(conn, self.now_ms())
        writer_task = asyncio.create_task(self._ws_writer(conn, websocket))
        try:
            async for message in websocket:
                if isinstance(message, bytes):
                    message = message.decode("utf-8", "replace")
                self.core.on_frame(conn, message, self.now_ms())
        except websockets.ConnectionClosed:
            pass
        finally:
            self.core.on_close(conn, self.now_ms())
            conn.close()
            await writer_task

    async def _ws_writer(self, conn: _QueueConn, websocket) -> None:
        import websockets
        try:
            while True:
                item = await conn.outbox.get()
                if item is _CLOSE:
                    break
                await websocket.send(item)
        except websockets.ConnectionClosed:
            pass
        finally:
            try:
                await websocket.close()
            except websockets.ConnectionClosed:
                pass


def _parse_addr(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected ADDR:PORT, got {value!r}")
    return host, int(port)


def _serve_static(directory: str, port: int):
    import http.server
    import threading
    handler = functools.partial(http.server.SimpleHTTPRequestHandler,
                                directory=directory)
    httpd = http.server.ThreadingHTTPServer(("0.0.0.0", port), handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    logger.info("static pages on http://0.0.0.0:%d/ from %s", port, directory)
    return httpd


async def _amain(args) -> None:
    core = RelayCore(idle_timeout_ms=args.idle_timeout_ms)
    host, port = _parse_addr(args.listen)
    ws_host, ws_port = _parse_addr(args.ws_listen)
    server = RelayServer(core, host=host, port=port, ws_host=ws_host, ws_port=ws_port)
    await server.start()
    if args.http_dir:
        _serve_static(args.http_dir, args.http)
    print(f"relay: tcp://{server.host}:{server.port}  "
          f"ws://{server.ws_host}:{server.ws_port}")
    await asyncio.Event().wait()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="phonepad-relay",
                                     description="Session relay for phone controllers")
    parser.add_argument("--listen", default=os.environ.get("PHONEPAD_LISTEN", "127.0.0.1:8765"),
                        help="TCP listener, ADDR:PORT")
    parser.add_argument("--ws-listen", default=os.environ.get("PHONEPAD_WS_LISTEN", "127.0.0.1:8766"),
                        help="WebSocket listener for browser pages, ADDR:PORT")
    parser.add_argument("--idle-timeout-ms", type=int,
                        default=int(os.environ.get("PHONEPAD_IDLE_MS", "5000")))
    parser.add_argument("--http-dir", default=None,
                        help="serve this directory of static pages over HTTP")
    parser.add_argument("--http", type=int, default=8080,
                        help="port for --http-dir")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        asyncio.run(_amain(args))
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
