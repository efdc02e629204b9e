// Thin browser-side websocket wrapper around the session protocol.

import { ErrorFrame, HelloFrame, StateFrame, parseServerFrame } from "./protocol.js";

export interface NetCallbacks {
  onHello(frame: HelloFrame): void;
  onState(frame: StateFrame): void;
  onError(frame: ErrorFrame): void;
  onClose(): void;
}

export class SessionLink {
  private ws: WebSocket;

  constructor(url: string, callbacks: NetCallbacks) {
    this.ws = new WebSocket(url);
    this.ws.onmessage = (ev: MessageEvent) => {
      const frame = parseServerFrame(String(ev.data));
      if (frame === null) return;
      if (frame.type === "hello") callbacks.onHello(frame);
      else if (frame.type === "state") callbacks.onState(frame);
      else callbacks.onError(frame);
    };
    this.ws.onclose = () => callbacks.onClose();
    this.ws.onerror = () => callbacks.onClose();
  }

  get open(): boolean {
    return this.ws.readyState === WebSocket.OPEN;
  }

  send(payload: string): boolean {
    if (!this.open) return false;
    this.ws.send(payload);
    return true;
  }

  close(): void {
    this.ws.close();
  }
}
